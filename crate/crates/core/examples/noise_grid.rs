//! Accuracy of joint and naive fusion as each stream is blacked out with
//! growing probability, rendered as heatmaps.
//!
//! ```text
//! cargo run --release --example noise_grid -- [run_dir/artifacts] [black_image|black_rectangle]
//! ```

mod support;

use zdda::datasets::{Family, NoiseModel};
use zdda::eval::grid::{NAIVE, ZDDA3};
use zdda::eval::{noise_grid_eval, DEFAULT_LEVELS};
use zdda::experiment::emit_heatmap;
use zdda::pipeline::{assemble_fusion, assemble_zdda2, FusionMode};

fn main() -> zdda::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = match args.get(1).map(String::as_str) {
        Some("black_rectangle") => NoiseModel::BlackRectangle,
        _ => NoiseModel::BlackImage,
    };
    let task = support::load_task(Family::Mnist, Family::Fashion, 300, 50)?;
    let a = support::artifacts_or_train(args.first().map(String::as_str), &task)?;
    let dual = assemble_fusion(&a, FusionMode::TestDual)?;
    let (c_source, c_target) = assemble_zdda2(&a.s2, &a.t, &a.source_classifier)?;
    let grid = noise_grid_eval(&dual, &c_source, &c_target, &task.test_pairs, &DEFAULT_LEVELS, &DEFAULT_LEVELS, model, support::SEED)?;

    println!("ZDDA3 minus naive fusion (rows p_source, columns p_target, points):");
    for (i, ps) in grid.p_source_levels.iter().enumerate() {
        let row: Vec<String> = (0..grid.p_target_levels.len())
            .map(|j| format!("{:+6.1}", 100.0 * (grid.accuracy[ZDDA3][i][j] - grid.accuracy[NAIVE][i][j])))
            .collect();
        println!("{ps:>5} {}", row.join(" "));
    }
    let (won, total) = grid.wins(|_, _| true);
    println!("ZDDA3 >= naive in {won}/{total} cells, majority prior {:.3}", grid.majority_prior);

    let dir = support::out_dir("noise_grid");
    for path in emit_heatmap(&grid, &dir, "grid")? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
