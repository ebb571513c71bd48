//! Train a gray LeNet on MNIST and measure the drop on colored MNIST-M.
//!
//! ```text
//! cargo run --release --example train_lenet -- [per_class] [iterations]
//! ```

mod support;

use zdda::datasets::Family;
use zdda::eval::evaluate;
use zdda::model::network::{build_branch, build_classifier, BranchTag, ClassifierKind, SplitNetworkSpec};
use zdda::model::train::train_supervised;
use zdda::pipeline::{ComposedClassifier, GrayInput};

fn main() -> zdda::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let per_class = args.first().copied().unwrap_or(200);
    let iterations = args.get(1).copied().unwrap_or(1500);

    let task = support::load_task(Family::Mnist, Family::Fashion, per_class, 100)?;
    let spec = SplitNetworkSpec::lenet(1);
    let mut branch = build_branch::<f32>(&spec, 1, BranchTag::Reference)?;
    let mut head = build_classifier::<f32>(ClassifierKind::Source, spec.feature_dim, 10, 2)?;
    let log = train_supervised(&mut branch, &mut head, &task.tr_source, &support::hyper(64, 1e-2, iterations, "lenet"))?;
    for p in &log.curve {
        println!("iter {:>6}  train {:.4}  monitor {:.4}", p.iteration, p.train_loss, p.monitor_loss);
    }

    let model = ComposedClassifier::new(&branch, &head)?;
    let on_gray = evaluate(&model, &task.test_pairs.source_dataset()?)?;
    let on_color = evaluate(&GrayInput(model), &task.test_pairs.target_dataset()?)?;
    println!("MNIST test    {:.2}% overall, {:.2}% per class", 100.0 * on_gray.overall_accuracy, 100.0 * on_gray.mean_per_class_accuracy);
    println!("MNIST-M test  {:.2}% overall, {:.2}% per class", 100.0 * on_color.overall_accuracy, 100.0 * on_color.mean_per_class_accuracy);
    Ok(())
}
