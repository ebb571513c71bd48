use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zdda::datasets::DatasetId;
use zdda::eval::similarity::label_words;
use zdda::eval::{semantic_similarity, EmbeddingTable, NoiseGridResult};
use zdda::experiment::{
    check_record, emit_heatmap, emit_table, run_experiment, ExperimentConfig, Overrides, RunRecord, TableLayout,
};
use zdda::ZddaError;

#[derive(Parser)]
#[command(name = "zdda", version, about = "Zero-shot domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Per-class cap on task-relevant and task-irrelevant training data.
        #[arg(long)]
        subsample_per_class: Option<usize>,
        /// Enforce the config's `[check]` thresholds (exit code 4 on failure).
        #[arg(long)]
        check: bool,
    },
    /// Tabulate finished runs.
    Table {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value = "table4")]
        layout: String,
        /// Also write `<out>.csv` and `<out>.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the noise-grid heatmaps of a run.
    Heatmap { run_dir: PathBuf },
    /// Semantic similarity of two label sets. Each set is a dataset id,
    /// a file with one label per line, or a comma-separated list.
    Similarity {
        labels_a: String,
        labels_b: String,
        #[arg(long)]
        embeddings: PathBuf,
    },
}

enum Failure {
    Error(ZddaError),
    Check(Vec<String>),
}

impl From<ZddaError> for Failure {
    fn from(e: ZddaError) -> Self {
        Failure::Error(e)
    }
}

fn labels_of(arg: &str) -> Result<Vec<String>, ZddaError> {
    if let Ok(id) = arg.parse::<DatasetId>() {
        return Ok(id.family.class_names());
    }
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| ZddaError::Resolution(format!("{arg}: {e}")))?;
        return Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect());
    }
    Ok(arg.split(',').map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            output,
            subsample_per_class,
            check,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            Overrides {
                seed,
                output,
                subsample_per_class,
            }
            .apply(&mut cfg);
            let record = run_experiment(&cfg)?;
            for (name, r) in &record.reports {
                println!("{name:<20} {}", r.cell());
            }
            for (name, why) in &record.failures {
                println!("{name:<20} FAILED: {why}");
            }
            if let Some(s) = record.similarity {
                println!("{:<20} {s:.4}", "similarity");
            }
            if check {
                let failed = check_record(&cfg, &record);
                if !failed.is_empty() {
                    return Err(Failure::Check(failed));
                }
            }
        }
        Command::Table { run_dirs, layout, out } => {
            let layout: TableLayout = layout.parse()?;
            let records = run_dirs.iter().map(|d| RunRecord::load(d)).collect::<Result<Vec<_>, _>>()?;
            let table = emit_table(&records, layout);
            let text = table.to_text();
            print!("{text}");
            if let Some(out) = out {
                let csv_path = out.with_extension("csv");
                fs::write(&csv_path, table.to_csv()?).map_err(|e| ZddaError::Resolution(format!("{}: {e}", csv_path.display())))?;
                let txt_path = out.with_extension("txt");
                fs::write(&txt_path, text).map_err(|e| ZddaError::Resolution(format!("{}: {e}", txt_path.display())))?;
            }
        }
        Command::Heatmap { run_dir } => {
            let record = RunRecord::load(&run_dir)?;
            if record.grids.is_empty() {
                return Err(ZddaError::Resolution(format!("{} has no noise grids", run_dir.display())).into());
            }
            for (tag, rel) in &record.grids {
                let grid = NoiseGridResult::read_json(&run_dir.join(rel))?;
                for p in emit_heatmap(&grid, &run_dir.join("grids"), tag)? {
                    println!("{}", p.display());
                }
            }
        }
        Command::Similarity {
            labels_a,
            labels_b,
            embeddings,
        } => {
            let a = labels_of(&labels_a)?;
            let b = labels_of(&labels_b)?;
            let words: HashSet<String> = label_words(a.iter().chain(&b).map(String::as_str));
            let table = EmbeddingTable::load(&embeddings, Some(&words))?;
            println!("{:.6}", semantic_similarity(&a, &b, &table)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(failed)) => {
            for f in failed {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(4)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                ZddaError::Configuration(_) => 2,
                ZddaError::Resolution(_) => 3,
                _ => 1,
            })
        }
    }
}
