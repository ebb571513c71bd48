//! Data loading and a compact training schedule shared by the examples.
//!
//! The data root comes from `ZDDA_DATA_ROOT` (default `data`), the synthesis
//! cache from `ZDDA_CACHE` (default `<root>/cache`).
#![allow(dead_code)]

use std::path::PathBuf;

use zdda::datasets::transform::subsample_pairs;
use zdda::datasets::{make_pair_set, subsample, CorpusSplit, DataRoot, DualDomainPairSet, Family, LabeledDataset, Split};
use zdda::model::network::{build_branch, BranchTag, SplitNetworkSpec};
use zdda::model::train::TrainHyper;
use zdda::pipeline::{pretrain_target, step1_align, step2_joint, step3_fusion, FusionAugment, Provenance, ZddaArtifacts};
use zdda::{seed, Result};

pub const SEED: u64 = 7;

pub fn data_root() -> DataRoot {
    let root = DataRoot::from_env().unwrap_or_else(|| PathBuf::from("data"));
    let cache = std::env::var_os("ZDDA_CACHE").map(PathBuf::from).unwrap_or_else(|| root.join("cache"));
    DataRoot::new(root, cache, CorpusSplit::Disjoint)
}

pub fn pairs(root: &DataRoot, family: Family, split: Split) -> Result<DualDomainPairSet> {
    let gray = root.gray(family, split)?;
    let (colored, _) = root.colored(family, split, &gray, 0)?;
    make_pair_set(&gray, &colored)
}

/// Labeled gray training data of the task, colored test pairs of the task,
/// and task-irrelevant training pairs, all class-balanced subsets.
pub struct Task {
    pub tr_source: LabeledDataset,
    pub test_pairs: DualDomainPairSet,
    pub ti_pairs: DualDomainPairSet,
}

pub fn load_task(task: Family, ti: Family, train_pc: usize, test_pc: usize) -> Result<Task> {
    let root = data_root();
    let tr = root.gray(task, Split::Train)?;
    Ok(Task {
        tr_source: subsample(&tr, train_pc, seed::derive(SEED, "tr"))?,
        test_pairs: subsample_pairs(&pairs(&root, task, Split::Test)?, test_pc, seed::derive(SEED, "test"))?,
        ti_pairs: subsample_pairs(&pairs(&root, ti, Split::Train)?, train_pc, seed::derive(SEED, "ti"))?,
    })
}

pub fn hyper(batch: usize, lr: f64, iterations: usize, stage: &str) -> TrainHyper {
    let mut h = TrainHyper::new(batch, lr, iterations, seed::derive(SEED, stage));
    h.monitor_every = (iterations / 5).max(1);
    h
}

/// Shortened schedule of all three steps, with `scale` times the base
/// iteration counts.
pub fn train_artifacts(task: &Task, scale: usize) -> Result<ZddaArtifacts> {
    let ti_target = task.ti_pairs.target_dataset()?;
    let (t, r0) = pretrain_target(&ti_target, &SplitNetworkSpec::lenet(3), &hyper(64, 1e-2, 400 * scale, "pretrain_t"))?;
    let s1_init = build_branch::<f32>(&SplitNetworkSpec::lenet(1), seed::derive(SEED, "init/s1"), BranchTag::S1)?;
    let (s1, r1) = step1_align(&task.ti_pairs, &t, s1_init, &hyper(32, 1e-4, 400 * scale, "step1"))?;
    let (s2, head, r2) = step2_joint(&task.tr_source, &task.ti_pairs, &t, &s1, &hyper(32, 1e-5, 100 * scale, "step2"))?;
    let (fusion, r3) = step3_fusion(&task.tr_source, &s2, &s1, FusionAugment::default(), &hyper(32, 1e-2, 100 * scale, "step3"))?;
    for r in [&r0, &r1, &r2, &r3] {
        println!(
            "{:<10} monitor loss {:>10.4} -> {:>10.4}",
            r.step, r.log.initial_monitor_loss, r.log.final_monitor_loss
        );
    }
    Ok(ZddaArtifacts {
        t,
        s1,
        s2,
        source_classifier: head,
        fusion: Some(fusion),
        provenance: Provenance {
            steps: vec![r0, r1, r2, r3],
            ..Default::default()
        },
    })
}

/// Artifacts saved by `zdda run` in `dir`, or a short training run.
pub fn artifacts_or_train(dir: Option<&str>, task: &Task) -> Result<ZddaArtifacts> {
    match dir {
        Some(d) => ZddaArtifacts::load(std::path::Path::new(d)),
        None => train_artifacts(task, 1),
    }
}

pub fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("zdda-examples").join(name);
    std::fs::create_dir_all(&dir).expect("create example output dir");
    dir
}
