//! Adapt an MNIST classifier to MNIST-M without any MNIST-M training data,
//! using Fashion-MNIST gray/colored pairs as the bridge.
//!
//! ```text
//! cargo run --release --example zdda2 -- [per_class] [schedule_scale]
//! ```

mod support;

use zdda::datasets::Family;
use zdda::eval::evaluate;
use zdda::pipeline::assemble_zdda2;

fn main() -> zdda::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let per_class = args.first().copied().unwrap_or(300);
    let scale = args.get(1).copied().unwrap_or(1);

    let task = support::load_task(Family::Mnist, Family::Fashion, per_class, 100)?;
    println!(
        "{} labeled MNIST, {} Fashion pairs, {} MNIST-M test",
        task.tr_source.len(),
        task.ti_pairs.len(),
        task.test_pairs.len()
    );
    let a = support::train_artifacts(&task, scale)?;
    let step2 = a.provenance.step("step2").expect("step 2 ran");
    println!("step2 loss terms: {:?}", step2.metrics);

    let (c_source, c_target) = assemble_zdda2(&a.s2, &a.t, &a.source_classifier)?;
    let src = evaluate(&c_source, &task.test_pairs.source_dataset()?)?;
    let tgt = evaluate(&c_target, &task.test_pairs.target_dataset()?)?;
    println!("C_source on MNIST    {:.2}%", 100.0 * src.overall_accuracy);
    println!("C_target on MNIST-M  {:.2}%", 100.0 * tgt.overall_accuracy);
    Ok(())
}
