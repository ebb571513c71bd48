//! Compare the hand-written backward pass of a LeNet branch with central
//! finite differences in double precision.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use ndarray::Array2;
use rand::Rng;
use zdda::datasets::ImageTensor;
use zdda::model::network::{build_branch, BranchTag, SplitNetworkSpec};
use zdda::seed;

const H: f64 = 1e-7;

fn main() -> zdda::Result<()> {
    let mut rng = seed::rng(3);
    let branch = build_branch::<f64>(&SplitNetworkSpec::lenet(3), 11, BranchTag::T)?;
    let images: Vec<ImageTensor> = (0..2)
        .map(|_| ImageTensor::new(3, 28, 28, (0..3 * 28 * 28).map(|_| rng.random()).collect()))
        .collect::<zdda::Result<_>>()?;
    // objective: a random linear functional of the features
    let weights = Array2::from_shape_fn((2, branch.feature_dim()), |_| rng.random_range(-1.0..1.0));
    let (_, trace) = branch.forward_traced(&images)?;
    let grads = branch.backward(trace, weights.view());

    let mut worst = 0.0f64;
    for (p, g) in branch.params.iter().zip(grads.iter()) {
        for _ in 0..4 {
            let k = rng.random_range(0..p.data.len());
            let mut probe = branch.clone();
            let orig = p.data[k];
            probe.params.get_mut(&p.name).unwrap().data[k] = orig + H;
            let up = (probe.forward_features(&images)? * &weights).sum();
            probe.params.get_mut(&p.name).unwrap().data[k] = orig - H;
            let down = (probe.forward_features(&images)? * &weights).sum();
            let numeric = (up - down) / (2.0 * H);
            let rel = (g.data[k] - numeric).abs() / g.data[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            println!("{:<14} [{k:>6}] analytic {:>12.6e} numeric {numeric:>12.6e}", p.name, g.data[k]);
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
