//! Executes an experiment config: data, training stages, evaluations.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Evaluation, ExperimentConfig, TaskConfig};
use super::heatmap::emit_heatmap;
use crate::datasets::transform::subsample_pairs;
use crate::datasets::{
    make_pair_set, subsample, DataRoot, DualDomainPairSet, Family, LabeledDataset, NoiseModel, Split,
};
use crate::error::{Result, ZddaError};
use crate::eval::similarity::label_words;
use crate::eval::{
    evaluate, evaluate_dual, noise_grid_eval, semantic_similarity, EmbeddingTable, EvalReport, NaiveFusion,
};
use crate::model::checkpoint::{load_branch, load_classifier, save_branch, save_classifier};
use crate::model::network::{build_branch, build_classifier, BranchTag, ClassifierKind};
use crate::model::train::{train_supervised, TrainHyper, TrainLog};
use crate::model::{BranchState, ClassifierState};
use crate::pipeline::{
    assemble_fusion, assemble_zdda2, pretrain_target, step1_align, step1_align_target, step2_joint,
    step3_fusion, AlignSide, ComposedClassifier, FusionMode, FusionStates, GrayInput, Provenance, StepRecord,
    ZddaArtifacts,
};
use crate::seed;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RECORD_FILE: &str = "run_record.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub key: String,
    pub wall_seconds: f64,
    /// Loaded from a previous run instead of recomputed.
    pub resumed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub task: TaskConfig,
    pub stages: BTreeMap<String, StageInfo>,
    /// Artifact paths relative to the run directory.
    pub artifacts: BTreeMap<String, PathBuf>,
    pub reports: BTreeMap<String, EvalReport>,
    /// Evaluations that could not be produced, with the reason.
    pub failures: BTreeMap<String, String>,
    /// Noise-grid result files keyed by noise model.
    pub grids: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    /// Scalar training diagnostics, `"<stage>.<name>"`.
    pub metrics: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(RECORD_FILE);
        let text = fs::read_to_string(&path).map_err(|e| ZddaError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, run_dir: &Path) -> Result<()> {
        write_json(&run_dir.join(RECORD_FILE), self)
    }

    pub fn accuracy(&self, report: &str) -> Option<f64> {
        self.reports.get(report).map(|r| r.overall_accuracy)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json).map_err(|e| ZddaError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ZddaError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Exclusive ownership of a run directory for the lifetime of the guard.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(ZddaError::Consistency(format!(
                "{} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(ZddaError::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn key_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

fn hyper_json(h: &TrainHyper) -> String {
    serde_json::to_string(h).unwrap_or_default()
}

/// Stage directories keyed by their inputs; a stage whose key matches a
/// completed directory is loaded instead of recomputed.
struct Stages {
    dir: PathBuf,
    info: BTreeMap<String, StageInfo>,
}

impl Stages {
    fn run<T>(
        &mut self,
        name: &str,
        key: String,
        load: impl FnOnce(&Path) -> Result<T>,
        compute: impl FnOnce() -> Result<T>,
        save: impl FnOnce(&Path, &T) -> Result<()>,
    ) -> Result<T> {
        let dir = self.dir.join(name);
        let key_path = dir.join("key.txt");
        let start = Instant::now();
        if fs::read_to_string(&key_path).is_ok_and(|k| k.trim() == key) {
            match load(&dir) {
                Ok(v) => {
                    log::info!("stage {name}: resumed");
                    self.info.insert(
                        name.into(),
                        StageInfo {
                            key,
                            wall_seconds: start.elapsed().as_secs_f64(),
                            resumed: true,
                        },
                    );
                    return Ok(v);
                }
                Err(e) => log::warn!("stage {name}: cached outputs unusable ({e}), recomputing"),
            }
        }
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| ZddaError::io(&dir, e))?;
        }
        log::info!("stage {name}: running");
        let v = compute()?;
        fs::create_dir_all(&dir).map_err(|e| ZddaError::io(&dir, e))?;
        save(&dir, &v)?;
        fs::write(&key_path, &key).map_err(|e| ZddaError::io(&key_path, e))?;
        let secs = start.elapsed().as_secs_f64();
        log::info!("stage {name}: done in {secs:.1}s");
        self.info.insert(
            name.into(),
            StageInfo {
                key,
                wall_seconds: secs,
                resumed: false,
            },
        );
        Ok(v)
    }
}

type Supervised = (BranchState, ClassifierState, TrainLog);

fn load_supervised(dir: &Path) -> Result<Supervised> {
    Ok((
        load_branch(&dir.join("branch.ckpt"))?,
        load_classifier(&dir.join("head.ckpt"))?,
        read_json(&dir.join("log.json"))?,
    ))
}

fn save_supervised(dir: &Path, v: &Supervised) -> Result<()> {
    save_branch(&dir.join("branch.ckpt"), &v.0)?;
    save_classifier(&dir.join("head.ckpt"), &v.1)?;
    write_json(&dir.join("log.json"), &v.2)
}

/// Datasets of one run.
struct TaskData {
    tr_train: LabeledDataset,
    test_pairs: DualDomainPairSet,
    ti_pairs: DualDomainPairSet,
    ti_target: LabeledDataset,
    fingerprints: BTreeMap<String, String>,
}

fn data_root(cfg: &ExperimentConfig) -> Result<DataRoot> {
    let root = cfg
        .data
        .root
        .clone()
        .or_else(DataRoot::from_env)
        .ok_or_else(|| {
            ZddaError::Resolution(format!(
                "no data root: set data.root or {}",
                crate::datasets::registry::DATA_ROOT_ENV
            ))
        })?;
    let cache = cfg.data.cache.clone().unwrap_or_else(|| root.join("cache"));
    Ok(DataRoot::new(root, cache, cfg.data.corpus_split))
}

fn load_pairs(root: &DataRoot, family: Family, split: Split, synth_seed: u64) -> Result<DualDomainPairSet> {
    let gray = root.gray(family, split)?;
    let (colored, _) = root.colored(family, split, &gray, synth_seed)?;
    make_pair_set(&gray, &colored)
}

fn load_task_data(cfg: &ExperimentConfig, root: &DataRoot) -> Result<TaskData> {
    let d = &cfg.data;
    let task = cfg.task.source.family;
    let ti = cfg.task.task_irrelevant.family;
    let mut tr_train = root.gray(task, Split::Train)?;
    if let Some(k) = d.subsample_per_class {
        tr_train = subsample(&tr_train, k, seed::derive(cfg.seed, "subsample/tr"))?;
    }
    let mut test_pairs = load_pairs(root, task, Split::Test, d.synth_seed)?;
    if let Some(k) = d.test_per_class {
        test_pairs = subsample_pairs(&test_pairs, k, seed::derive(cfg.seed, "subsample/test"))?;
    }
    let mut ti_pairs = load_pairs(root, ti, Split::Train, d.synth_seed)?;
    if let Some(k) = d.ti_subsample_per_class {
        ti_pairs = subsample_pairs(&ti_pairs, k, seed::derive(cfg.seed, "subsample/ti"))?;
    }
    let ti_target = ti_pairs.target_dataset()?;
    let mut fingerprints = BTreeMap::new();
    fingerprints.insert("tr_train".into(), tr_train.fingerprint());
    fingerprints.insert("test_source".into(), test_pairs.source_dataset()?.fingerprint());
    fingerprints.insert("test_target".into(), test_pairs.target_dataset()?.fingerprint());
    fingerprints.insert("ti_source".into(), ti_pairs.source_dataset()?.fingerprint());
    fingerprints.insert("ti_target".into(), ti_target.fingerprint());
    Ok(TaskData {
        tr_train,
        test_pairs,
        ti_pairs,
        ti_target,
        fingerprints,
    })
}

/// Applies command-line overrides to a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub subsample_per_class: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(k) = self.subsample_per_class {
            cfg.data.subsample_per_class = Some(k);
            cfg.data.ti_subsample_per_class = Some(k);
        }
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn seeded(h: &TrainHyper, master: u64, stage: &str) -> TrainHyper {
    let mut h = h.clone();
    h.seed = seed::derive(master, stage);
    h
}

fn record_metrics(metrics: &mut BTreeMap<String, f64>, rec: &StepRecord) {
    for (k, v) in &rec.metrics {
        metrics.insert(format!("{}.{k}", rec.step), *v);
    }
    metrics.insert(format!("{}.initial_monitor_loss", rec.step), rec.log.initial_monitor_loss);
    metrics.insert(format!("{}.final_monitor_loss", rec.step), rec.log.final_monitor_loss);
}

/// Runs every stage the evaluation plan needs, in dependency order, and
/// persists artifacts, reports and the run record under the output dir.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let out = output_dir(cfg);
    fs::create_dir_all(&out).map_err(|e| ZddaError::io(&out, e))?;
    let _lock = RunLock::acquire(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?).map_err(|e| ZddaError::io(&out, e))?;

    let root = data_root(cfg)?;
    let data = load_task_data(cfg, &root)?;
    let test_src = data.test_pairs.source_dataset()?;
    let test_tgt = data.test_pairs.target_dataset()?;
    let spec1 = cfg.backbone.spec(1)?;
    let spec3 = cfg.backbone.spec(3)?;
    let fp = &data.fingerprints;
    let mut stages = Stages {
        dir: out.join("stages"),
        info: BTreeMap::new(),
    };
    let mut metrics = BTreeMap::new();
    let mut reports = BTreeMap::new();
    let mut failures = BTreeMap::new();
    let mut artifacts = BTreeMap::new();
    let wants = |e| cfg.wants(e);

    let supervised = |stage: &str, ds: &LabeledDataset, channels: usize| -> Result<Supervised> {
        let spec = if channels == 1 { &spec1 } else { &spec3 };
        let h = seeded(&cfg.hyper.reference, cfg.seed, stage);
        let mut b = build_branch::<f32>(spec, seed::derive(h.seed, "init/branch"), BranchTag::Reference)?;
        let mut c = build_classifier::<f32>(
            ClassifierKind::Source,
            spec.feature_dim,
            ds.class_count(),
            seed::derive(h.seed, "init/head"),
        )?;
        let log = train_supervised(&mut b, &mut c, ds, &h)?;
        Ok((b, c, log))
    };

    if wants(Evaluation::SourceOnly) {
        let h = seeded(&cfg.hyper.reference, cfg.seed, "reference_source");
        let key = key_of(&["reference_source", &hyper_json(&h), &spec1.backbone_id, &spec1.split_layer, &fp["tr_train"]]);
        let (b, c, _) = stages.run(
            "reference_source",
            key,
            load_supervised,
            || supervised("reference_source", &data.tr_train, 1),
            save_supervised,
        )?;
        let composed = ComposedClassifier::new(&b, &c)?;
        reports.insert("source_only".to_string(), evaluate(&GrayInput(composed), &test_tgt)?);
        reports.insert("source_only_source".to_string(), evaluate(&composed, &test_src)?);
        artifacts.insert("reference_source".into(), PathBuf::from("stages/reference_source"));
    }

    if wants(Evaluation::TargetOnly) {
        let h = seeded(&cfg.hyper.reference, cfg.seed, "reference_target");
        let tgt_train = load_pairs(&root, cfg.task.source.family, Split::Train, cfg.data.synth_seed)?;
        let mut tgt_train = tgt_train.target_dataset()?;
        if let Some(kk) = cfg.data.subsample_per_class {
            tgt_train = subsample(&tgt_train, kk, seed::derive(cfg.seed, "subsample/tr"))?;
        }
        let key = key_of(&["reference_target", &hyper_json(&h), &spec3.backbone_id, &spec3.split_layer, &tgt_train.fingerprint()]);
        let (b, c, _) = stages.run(
            "reference_target",
            key,
            load_supervised,
            || supervised("reference_target", &tgt_train, 3),
            save_supervised,
        )?;
        reports.insert("target_only".to_string(), evaluate(&ComposedClassifier::new(&b, &c)?, &test_tgt)?);
        artifacts.insert("reference_target".into(), PathBuf::from("stages/reference_target"));
    }

    let needs_zdda = [
        Evaluation::Zdda2,
        Evaluation::Zdda3,
        Evaluation::NaiveFusion,
        Evaluation::NoiseGrid,
    ]
    .into_iter()
    .any(wants);
    let mut provenance = Provenance::default();
    provenance.datasets = fp.clone();
    provenance.notes.push("step 2 reuses the step-1 pair set".into());

    let zdda = if needs_zdda {
        let h0 = seeded(&cfg.hyper.pretrain_t, cfg.seed, "pretrain_t");
        let key0 = key_of(&["pretrain_t", &hyper_json(&h0), &spec3.split_layer, &fp["ti_target"]]);
        let (t, rec0) = stages.run(
            "pretrain_t",
            key0,
            |d| Ok((load_branch(&d.join("t.ckpt"))?, read_json::<StepRecord>(&d.join("record.json"))?)),
            || pretrain_target(&data.ti_target, &spec3, &h0),
            |d, (t, r)| {
                save_branch(&d.join("t.ckpt"), t)?;
                write_json(&d.join("record.json"), r)
            },
        )?;

        let h1 = seeded(&cfg.hyper.step1, cfg.seed, "step1");
        let align_side = format!("{:?}", cfg.align_side);
        let key1 = key_of(&["step1", &hyper_json(&h1), &t.checksum(), &fp["ti_source"], &fp["ti_target"], &align_side]);
        let (s1, t, rec1) = stages.run(
            "step1",
            key1,
            |d| {
                Ok((
                    load_branch(&d.join("s1.ckpt"))?,
                    load_branch(&d.join("t.ckpt"))?,
                    read_json::<StepRecord>(&d.join("record.json"))?,
                ))
            },
            || {
                let s1_init = build_branch::<f32>(&spec1, seed::derive(h1.seed, "init/s1"), BranchTag::S1)?;
                match cfg.align_side {
                    AlignSide::Source => {
                        let (s1, r) = step1_align(&data.ti_pairs, &t, s1_init, &h1)?;
                        Ok((s1, t.clone(), r))
                    }
                    AlignSide::Target => step1_align_target(&data.ti_pairs, t.clone(), s1_init, &h1),
                }
            },
            |d, (s1, t, r)| {
                save_branch(&d.join("s1.ckpt"), s1)?;
                save_branch(&d.join("t.ckpt"), t)?;
                write_json(&d.join("record.json"), r)
            },
        )?;

        let h2 = seeded(&cfg.hyper.step2, cfg.seed, "step2");
        let key2 = key_of(&["step2", &hyper_json(&h2), &t.checksum(), &s1.checksum(), &fp["tr_train"], &fp["ti_source"], &fp["ti_target"]]);
        let (s2, head, rec2) = stages.run(
            "step2",
            key2,
            |d| {
                Ok((
                    load_branch(&d.join("s2.ckpt"))?,
                    load_classifier(&d.join("source_classifier.ckpt"))?,
                    read_json::<StepRecord>(&d.join("record.json"))?,
                ))
            },
            || step2_joint(&data.tr_train, &data.ti_pairs, &t, &s1, &h2),
            |d, (s2, c, r)| {
                save_branch(&d.join("s2.ckpt"), s2)?;
                save_classifier(&d.join("source_classifier.ckpt"), c)?;
                write_json(&d.join("record.json"), r)
            },
        )?;

        let mut step_recs = vec![rec0, rec1, rec2];
        let fusion = if cfg.needs_fusion() {
            let h3 = seeded(&cfg.hyper.step3, cfg.seed, "step3");
            let aug = serde_json::to_string(&cfg.fusion)?;
            let key3 = key_of(&["step3", &hyper_json(&h3), &aug, &s2.checksum(), &s1.checksum(), &fp["tr_train"]]);
            let (f, rec3) = stages.run(
                "step3",
                key3,
                |d| {
                    Ok((
                        FusionStates {
                            s3: load_branch(&d.join("s3.ckpt"))?,
                            s4: load_branch(&d.join("s4.ckpt"))?,
                            joint: load_classifier(&d.join("joint_classifier.ckpt"))?,
                        },
                        read_json::<StepRecord>(&d.join("record.json"))?,
                    ))
                },
                || step3_fusion(&data.tr_train, &s2, &s1, cfg.fusion, &h3),
                |d, (f, r)| {
                    save_branch(&d.join("s3.ckpt"), &f.s3)?;
                    save_branch(&d.join("s4.ckpt"), &f.s4)?;
                    save_classifier(&d.join("joint_classifier.ckpt"), &f.joint)?;
                    write_json(&d.join("record.json"), r)
                },
            )?;
            step_recs.push(rec3);
            Some(f)
        } else {
            None
        };
        for r in &step_recs {
            record_metrics(&mut metrics, r);
        }
        provenance.steps = step_recs;
        let arts = ZddaArtifacts {
            t,
            s1,
            s2,
            source_classifier: head,
            fusion,
            provenance,
        };
        arts.save(&out.join("artifacts"))?;
        artifacts.insert("zdda".into(), PathBuf::from("artifacts"));
        Some(arts)
    } else {
        None
    };

    let mut grids = BTreeMap::new();
    if let Some(a) = &zdda {
        let (c_source, c_target) = assemble_zdda2(&a.s2, &a.t, &a.source_classifier)?;
        if wants(Evaluation::Zdda2) {
            reports.insert("zdda2".to_string(), evaluate(&c_target, &test_tgt)?);
            reports.insert("zdda2_source".to_string(), evaluate(&c_source, &test_src)?);
        }
        if wants(Evaluation::NaiveFusion) {
            let naive = NaiveFusion {
                source: &c_source,
                target: &c_target,
            };
            reports.insert("naive_fusion".to_string(), evaluate_dual(&naive, &test_src, &test_tgt)?);
        }
        if wants(Evaluation::Zdda3) {
            let dual = assemble_fusion(a, FusionMode::TestDual)?;
            reports.insert("zdda3".to_string(), evaluate_dual(&dual, &test_src, &test_tgt)?);
            let solo = assemble_fusion(a, FusionMode::TestSourceOnly)?;
            reports.insert("zdda3_source_only".to_string(), evaluate_dual(&solo, &test_src, &test_src)?);
        }
        if wants(Evaluation::NoiseGrid) {
            let dual = assemble_fusion(a, FusionMode::TestDual)?;
            let pairs = match cfg.noise.test_per_class {
                Some(kk) => subsample_pairs(&data.test_pairs, kk, seed::derive(cfg.seed, "subsample/grid"))?,
                None => data.test_pairs.clone(),
            };
            // clean references on the grid's own subset, for the (0, 0) cell
            let (gs, gt) = (pairs.source_dataset()?, pairs.target_dataset()?);
            reports.insert("zdda3_grid_clean".to_string(), evaluate_dual(&dual, &gs, &gt)?);
            let naive = NaiveFusion {
                source: &c_source,
                target: &c_target,
            };
            reports.insert("naive_fusion_grid_clean".to_string(), evaluate_dual(&naive, &gs, &gt)?);
            let gdir = out.join("grids");
            fs::create_dir_all(&gdir).map_err(|e| ZddaError::io(&gdir, e))?;
            let mut models = vec![cfg.noise.model];
            models.extend(cfg.noise.extra_models.iter().filter(|m| **m != cfg.noise.model));
            for model in models {
                let tag = noise_tag(model);
                let start = Instant::now();
                let grid = noise_grid_eval(
                    &dual,
                    &c_source,
                    &c_target,
                    &pairs,
                    &cfg.noise.levels,
                    &cfg.noise.levels,
                    model,
                    seed::derive(cfg.seed, &format!("grid/{tag}")),
                )?;
                log::info!("noise grid {tag}: {:.1}s", start.elapsed().as_secs_f64());
                let json = gdir.join(format!("{tag}.json"));
                grid.write_json(&json)?;
                grid.write_csv(&gdir.join(format!("{tag}.csv")))?;
                emit_heatmap(&grid, &gdir, tag)?;
                grids.insert(tag.to_string(), PathBuf::from("grids").join(format!("{tag}.json")));
            }
        }
    }

    let mut similarity = None;
    if wants(Evaluation::Similarity) {
        match compute_similarity(cfg) {
            Ok(s) => similarity = Some(s),
            Err(e) => {
                failures.insert("similarity".to_string(), e.to_string());
            }
        }
    }
    let record = RunRecord {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        tool_version: TOOL_VERSION.to_string(),
        seed: cfg.seed,
        task: cfg.task.clone(),
        stages: stages.info,
        artifacts,
        reports,
        failures,
        grids,
        similarity,
        metrics,
    };
    record.save(&out)?;
    let rdir = out.join("reports");
    fs::create_dir_all(&rdir).map_err(|e| ZddaError::io(&rdir, e))?;
    for (name, r) in &record.reports {
        write_json(&rdir.join(format!("{name}.json")), r)?;
    }
    Ok(record)
}

pub fn noise_tag(model: NoiseModel) -> &'static str {
    match model {
        NoiseModel::BlackImage => "black_image",
        NoiseModel::BlackRectangle => "black_rectangle",
    }
}

fn compute_similarity(cfg: &ExperimentConfig) -> Result<f64> {
    let path = cfg
        .similarity
        .embeddings
        .as_ref()
        .ok_or_else(|| ZddaError::Configuration("no embedding table configured".into()))?;
    let a = cfg.task.source.family.class_names();
    let b = cfg.task.task_irrelevant.family.class_names();
    let words: HashSet<String> = label_words(a.iter().chain(&b).map(String::as_str));
    let table = EmbeddingTable::load(path, Some(&words))?;
    semantic_similarity(&a, &b, &table)
}

/// Outcome of `--check` thresholds against a record.
pub fn check_record(cfg: &ExperimentConfig, record: &RunRecord) -> Vec<String> {
    let mut failed = Vec::new();
    let acc = |name: &str| record.accuracy(name);
    for (name, &min) in &cfg.check.min_accuracy {
        match acc(name) {
            Some(a) if a >= min => {}
            other => failed.push(format!("{name}: {other:?} below {min}")),
        }
    }
    for (name, &max) in &cfg.check.max_accuracy {
        match acc(name) {
            Some(a) if a <= max => {}
            other => failed.push(format!("{name}: {other:?} above {max}")),
        }
    }
    for (pair, &gain) in &cfg.check.min_gain {
        let Some((a, b)) = pair.split_once('-') else {
            failed.push(format!("malformed gain key {pair:?}"));
            continue;
        };
        match (acc(a), acc(b)) {
            (Some(x), Some(y)) if x - y >= gain => {}
            (x, y) => failed.push(format!("{a} - {b}: {x:?} - {y:?} below {gain}")),
        }
    }
    failed
}
