use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{CorpusSplit, DatasetId, NoiseModel};
use crate::error::{Result, ZddaError};
use crate::eval::DEFAULT_LEVELS;
use crate::model::network::SplitNetworkSpec;
use crate::model::train::{LossWeights, TrainHyper};
use crate::pipeline::{AlignSide, FusionAugment};

/// Evaluations a run can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Gray reference classifier on target-modality test images.
    SourceOnly,
    /// Colored reference classifier trained on task-relevant target data.
    TargetOnly,
    /// Source head over `t` on target test images (plus over `s2` on source).
    Zdda2,
    /// Joint classifier with `s3 + t`, and `s3 + s4` on source only.
    Zdda3,
    NaiveFusion,
    NoiseGrid,
    Similarity,
}

impl Evaluation {
    pub fn needs_fusion(self) -> bool {
        matches!(self, Evaluation::Zdda3 | Evaluation::NoiseGrid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Gray task-relevant dataset, e.g. `mnist`.
    pub source: DatasetId,
    /// Colored counterpart, e.g. `mnist-m`.
    pub target: DatasetId,
    /// Gray family whose colored pairs serve as task-irrelevant data.
    pub task_irrelevant: DatasetId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub id: String,
    pub split_layer: String,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            id: "lenet".into(),
            split_layer: "ip1".into(),
        }
    }
}

impl BackboneConfig {
    pub fn spec(&self, input_channels: usize) -> Result<SplitNetworkSpec> {
        let base = SplitNetworkSpec {
            backbone_id: self.id.clone(),
            split_layer: self.split_layer.clone(),
            feature_dim: 0,
            input_channels,
            input_height: 28,
            input_width: 28,
        };
        base.with_input_size(28, 28)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Data root; falls back to `ZDDA_DATA_ROOT`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    /// Cache for synthesized colored datasets; defaults to `<root>/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub corpus_split: CorpusSplit,
    /// Seed of colored-variant synthesis, shared by all experiments so they
    /// see the same colored datasets.
    #[serde(default)]
    pub synth_seed: u64,
    /// Per-class cap on task-relevant training data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample_per_class: Option<usize>,
    /// Per-class cap on task-irrelevant pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ti_subsample_per_class: Option<usize>,
    /// Per-class cap on test data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
}

/// Hyperparameters per training stage. Seeds are derived from the master
/// seed; any `seed` given here is overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSet {
    pub reference: TrainHyper,
    pub pretrain_t: TrainHyper,
    pub step1: TrainHyper,
    pub step2: TrainHyper,
    pub step3: TrainHyper,
}

impl Default for HyperSet {
    fn default() -> Self {
        let supervised = TrainHyper::new(64, 1e-2, 10_000, 0);
        let mut step2 = TrainHyper::new(32, 1e-5, 1_000, 0);
        step2.loss_weights = LossWeights::default();
        Self {
            reference: supervised.clone(),
            pretrain_t: supervised,
            step1: TrainHyper::new(32, 1e-4, 10_000, 0),
            step2,
            step3: TrainHyper::new(32, 1e-2, 1_000, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Model used by the main grid.
    pub model: NoiseModel,
    /// Further test-time models evaluated with the same trained states.
    #[serde(default)]
    pub extra_models: Vec<NoiseModel>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Per-class cap on the grid's test pairs (balanced classes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
}

fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            model: NoiseModel::BlackImage,
            extra_models: vec![NoiseModel::BlackRectangle],
            levels: default_levels(),
            test_per_class: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

/// Thresholds enforced by `--check`, on overall accuracy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default)]
    pub min_accuracy: BTreeMap<String, f64>,
    #[serde(default)]
    pub max_accuracy: BTreeMap<String, f64>,
    /// `"a-b" = g` requires `acc(a) - acc(b) >= g`.
    #[serde(default)]
    pub min_gain: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub task: TaskConfig,
    #[serde(default)]
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub hyper: HyperSet,
    #[serde(default)]
    pub fusion: FusionAugment,
    #[serde(default)]
    pub align_side: AlignSide,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub evaluate: Vec<Evaluation>,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| ZddaError::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ZddaError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ZddaError::Configuration(e.to_string()))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Structural checks, including the zero-shot guard: the task-irrelevant
    /// family must differ from the task family.
    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        if t.source.colored || !t.target.colored {
            return Err(ZddaError::Configuration(
                "task source must be a gray id and task target a colored id".into(),
            ));
        }
        if t.source.family != t.target.family {
            return Err(ZddaError::Configuration(format!(
                "source {} and target {} must share one label space",
                t.source, t.target
            )));
        }
        if t.task_irrelevant.family == t.source.family || t.task_irrelevant.family == t.target.family {
            return Err(ZddaError::Configuration(format!(
                "task-irrelevant pairs {} come from the task family {}",
                t.task_irrelevant, t.source.family
            )));
        }
        if t.task_irrelevant.colored {
            return Err(ZddaError::Configuration(
                "name task-irrelevant pairs by their gray id".into(),
            ));
        }
        if self.evaluate.is_empty() {
            return Err(ZddaError::Configuration("evaluation plan is empty".into()));
        }
        for h in [
            &self.hyper.reference,
            &self.hyper.pretrain_t,
            &self.hyper.step1,
            &self.hyper.step2,
            &self.hyper.step3,
        ] {
            h.validate()?;
        }
        if !(0.0..=100.0).contains(&self.fusion.p_train) || self.fusion.copies == 0 {
            return Err(ZddaError::Configuration("invalid fusion augmentation".into()));
        }
        if self.noise.levels.is_empty() || self.noise.levels.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(ZddaError::Configuration("noise levels must lie in [0, 100]".into()));
        }
        self.backbone.spec(1)?.validate()?;
        Ok(())
    }

    pub fn wants(&self, e: Evaluation) -> bool {
        self.evaluate.contains(&e)
    }

    pub fn needs_fusion(&self) -> bool {
        self.evaluate.iter().any(|e| e.needs_fusion())
    }
}
