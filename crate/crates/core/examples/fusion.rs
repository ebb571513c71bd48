//! Sensor fusion with the joint classifier, compared with naive fusion.
//!
//! Pass the `artifacts` directory of a `zdda run` to skip training:
//!
//! ```text
//! cargo run --release --example fusion -- [run_dir/artifacts]
//! ```

mod support;

use zdda::datasets::Family;
use zdda::eval::{evaluate_dual, NaiveFusion};
use zdda::pipeline::{assemble_fusion, assemble_zdda2, FusionMode};

fn main() -> zdda::Result<()> {
    let dir = std::env::args().nth(1);
    let task = support::load_task(Family::Mnist, Family::Fashion, 300, 100)?;
    let a = support::artifacts_or_train(dir.as_deref(), &task)?;
    let (src, tgt) = (task.test_pairs.source_dataset()?, task.test_pairs.target_dataset()?);

    let dual = assemble_fusion(&a, FusionMode::TestDual)?;
    let source_only = assemble_fusion(&a, FusionMode::TestSourceOnly)?;
    let (c_source, c_target) = assemble_zdda2(&a.s2, &a.t, &a.source_classifier)?;
    let naive = NaiveFusion {
        source: &c_source,
        target: &c_target,
    };
    for (name, report) in [
        ("ZDDA3, gray + color", evaluate_dual(&dual, &src, &tgt)?),
        ("ZDDA3, gray only", evaluate_dual(&source_only, &src, &src)?),
        ("naive fusion", evaluate_dual(&naive, &src, &tgt)?),
    ] {
        println!("{name:<20} {:.2}% overall, {:.2}% per class", 100.0 * report.overall_accuracy, 100.0 * report.mean_per_class_accuracy);
    }
    Ok(())
}
