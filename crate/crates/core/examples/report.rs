//! Summary table and heatmaps from finished `zdda run` directories.
//!
//! ```text
//! cargo run --release --example report -- runs/mnist-fashion runs/fashion-mnist
//! ```

use std::path::Path;

use zdda::eval::NoiseGridResult;
use zdda::experiment::{emit_heatmap, emit_table, RunRecord, TableLayout};

fn main() -> zdda::Result<()> {
    let dirs: Vec<String> = std::env::args().skip(1).collect();
    if dirs.is_empty() {
        eprintln!("usage: report <run_dir>...");
        std::process::exit(2);
    }
    let records = dirs.iter().map(|d| RunRecord::load(Path::new(d))).collect::<zdda::Result<Vec<_>>>()?;
    let table = emit_table(&records, TableLayout::Adaptation);
    println!("{}", table.to_text());

    for (dir, r) in dirs.iter().zip(&records) {
        for (tag, rel) in &r.grids {
            let grid = NoiseGridResult::read_json(&Path::new(dir).join(rel))?;
            let out = Path::new(dir).join("heatmaps");
            let files = emit_heatmap(&grid, &out, tag)?;
            println!("{}: {tag} -> {} files in {}", r.name, files.len(), out.display());
        }
    }
    Ok(())
}
