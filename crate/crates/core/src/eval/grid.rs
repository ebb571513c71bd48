//! Accuracy of fusion and naive fusion over independent corruption rates of
//! the two test streams.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fusion::fuse_probabilities;
use super::report::{argmax, EVAL_CHUNK};
use crate::datasets::transform::{black_out, plan_corruption, CorruptionPlan};
use crate::datasets::{DualDomainPairSet, ImageTensor, LabeledDataset, NoiseModel, NoiseSpec};
use crate::error::{Result, ZddaError};
use crate::model::loss::softmax;
use crate::model::network::{BranchState, ClassifierState};
use crate::pipeline::{ComposedClassifier, FusionAssembly, FusionMode};
use crate::seed;

pub const DEFAULT_LEVELS: [f64; 6] = [0.0, 20.0, 40.0, 60.0, 80.0, 100.0];
pub const ZDDA3: &str = "zdda3";
pub const NAIVE: &str = "naive";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGridResult {
    pub noise_model: NoiseModel,
    /// Percent of corrupted source images, one per row.
    pub p_source_levels: Vec<f64>,
    /// Percent of corrupted target images, one per column.
    pub p_target_levels: Vec<f64>,
    /// `accuracy[method][i][j]`, fractions in `[0, 1]`.
    pub accuracy: BTreeMap<String, Vec<Vec<f64>>>,
    /// `zdda3 - naive` per cell.
    pub diff: Vec<Vec<f64>>,
    pub n: usize,
    /// Frequency of the most common test class.
    pub majority_prior: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct CsvRow {
    p_src: f64,
    p_tgt: f64,
    acc_zdda3: f64,
    acc_naive: f64,
    diff: f64,
}

impl NoiseGridResult {
    pub fn grid(&self, method: &str) -> Option<&Vec<Vec<f64>>> {
        self.accuracy.get(method)
    }

    /// `(cells where zdda3 >= naive, cells considered)` over cells whose
    /// levels pass `keep(p_source, p_target)`.
    pub fn wins(&self, keep: impl Fn(f64, f64) -> bool) -> (usize, usize) {
        let (z, nv) = (&self.accuracy[ZDDA3], &self.accuracy[NAIVE]);
        let mut won = 0;
        let mut total = 0;
        for (i, &ps) in self.p_source_levels.iter().enumerate() {
            for (j, &pt) in self.p_target_levels.iter().enumerate() {
                if keep(ps, pt) {
                    total += 1;
                    won += usize::from(z[i][j] >= nv[i][j]);
                }
            }
        }
        (won, total)
    }

    /// Consistency check used before rendering or tabulating.
    pub fn check_complete(&self) -> Result<()> {
        let (r, c) = (self.p_source_levels.len(), self.p_target_levels.len());
        let ok_shape = |g: &Vec<Vec<f64>>| g.len() == r && g.iter().all(|row| row.len() == c);
        for m in [ZDDA3, NAIVE] {
            match self.accuracy.get(m) {
                Some(g) if ok_shape(g) => {}
                _ => return Err(ZddaError::Consistency(format!("grid for {m} is incomplete"))),
            }
        }
        if !ok_shape(&self.diff) || r == 0 || c == 0 {
            return Err(ZddaError::Consistency("difference grid is incomplete".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.check_complete()?;
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| ZddaError::format(path, e.to_string()))?;
        for (i, &ps) in self.p_source_levels.iter().enumerate() {
            for (j, &pt) in self.p_target_levels.iter().enumerate() {
                w.serialize(CsvRow {
                    p_src: ps,
                    p_tgt: pt,
                    acc_zdda3: self.accuracy[ZDDA3][i][j],
                    acc_naive: self.accuracy[NAIVE][i][j],
                    diff: self.diff[i][j],
                })
                .map_err(|e| ZddaError::format(path, e.to_string()))?;
            }
        }
        w.flush().map_err(|e| ZddaError::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| ZddaError::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ZddaError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Clean features of one branch over one stream, plus its response to an
/// all-zero image.
struct StreamCache<'a> {
    branch: &'a BranchState,
    images: &'a [ImageTensor],
    clean: Array2<f32>,
    zero: Array2<f32>,
}

impl<'a> StreamCache<'a> {
    fn new(branch: &'a BranchState, ds: &'a LabeledDataset) -> Result<Self> {
        let (c, h, w) = ds.image_shape().unwrap_or((branch.spec.input_channels, 1, 1));
        Ok(Self {
            branch,
            images: ds.images(),
            clean: branch.forward_features_batched(ds.images())?,
            zero: branch.forward_features(&[ImageTensor::zeros(c, h, w)])?,
        })
    }

    /// Features after applying `plan`; only corrupted rows are recomputed.
    fn corrupted(&self, plan: &CorruptionPlan) -> Result<Array2<f32>> {
        let mut out = self.clean.clone();
        if plan.rects.is_empty() {
            for &i in &plan.indices {
                out.row_mut(i).assign(&self.zero.row(0));
            }
            return Ok(out);
        }
        let altered: Vec<ImageTensor> = plan
            .indices
            .iter()
            .zip(&plan.rects)
            .map(|(&i, &r)| black_out(&self.images[i], r))
            .collect();
        let f = self.branch.forward_features_batched(&altered)?;
        for (k, &i) in plan.indices.iter().enumerate() {
            out.row_mut(i).assign(&f.row(k));
        }
        Ok(out)
    }
}

/// Logits of `head` over feature rows, in evaluation-sized chunks.
fn head_logits(head: &ClassifierState, features: &Array2<f32>) -> Result<Array2<f32>> {
    let mut out = Array2::zeros((features.nrows(), head.class_count));
    for start in (0..features.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(features.nrows());
        let l = head.forward_logits(features.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&l);
    }
    Ok(out)
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Fills the noise grid. Cell `(i, j)` corrupts the source stream at
/// `p_source[i]` percent and the target stream at `p_target[j]` percent with
/// seeds derived from `(seed, i, j)`; both methods see identical data.
#[allow(clippy::too_many_arguments)]
pub fn noise_grid_eval(
    fusion: &FusionAssembly<'_>,
    c_source: &ComposedClassifier<'_>,
    c_target: &ComposedClassifier<'_>,
    test_pairs: &DualDomainPairSet,
    p_source: &[f64],
    p_target: &[f64],
    model: NoiseModel,
    seed: u64,
) -> Result<NoiseGridResult> {
    if fusion.mode != FusionMode::TestDual {
        return Err(ZddaError::Configuration("noise grid needs the dual test wiring".into()));
    }
    let src = test_pairs.source_dataset()?;
    let tgt = test_pairs.target_dataset()?;
    if src.is_empty() {
        return Err(ZddaError::Capacity("noise grid needs test pairs".into()));
    }
    for &p in p_source.iter().chain(p_target) {
        if !(0.0..=100.0).contains(&p) {
            return Err(ZddaError::Configuration(format!("noise level {p} outside [0, 100]")));
        }
    }
    let n = src.len();
    let labels = src.labels();
    let s3 = StreamCache::new(fusion.branch_for_source_input, &src)?;
    let tf = StreamCache::new(fusion.branch_for_target_input, &tgt)?;
    let s2 = StreamCache::new(c_source.branch, &src)?;
    let tc = if std::ptr::eq(c_target.branch, fusion.branch_for_target_input) {
        None
    } else {
        Some(StreamCache::new(c_target.branch, &tgt)?)
    };
    let (_, h, w) = src.image_shape().unwrap();
    let (_, th, tw) = tgt.image_shape().unwrap();

    let cells: Vec<(usize, usize)> = (0..p_source.len())
        .flat_map(|i| (0..p_target.len()).map(move |j| (i, j)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(i, j)| -> Result<(f64, f64)> {
            let cell = seed::cell(seed, i, j);
            let sn = NoiseSpec::new(model, p_source[i] / 100.0, seed::derive(cell, "source"))?;
            let tn = NoiseSpec::new(model, p_target[j] / 100.0, seed::derive(cell, "target"))?;
            let sp = plan_corruption(n, h, w, &sn);
            let tp = plan_corruption(n, th, tw, &tn);
            let f3 = s3.corrupted(&sp)?;
            let ft = tf.corrupted(&tp)?;
            let joint = head_logits(fusion.joint_classifier, &concatenate![Axis(1), f3, ft])?;
            let zdda3: Vec<usize> = joint.rows().into_iter().map(argmax).collect();
            let f2 = s2.corrupted(&sp)?;
            let ftc = match &tc {
                Some(c) => c.corrupted(&tp)?,
                None => ft,
            };
            let ps = softmax(head_logits(c_source.head, &f2)?.view());
            let pt = softmax(head_logits(c_target.head, &ftc)?.view());
            let naive = fuse_probabilities(ps.view(), pt.view())?;
            Ok((accuracy(&zdda3, labels), accuracy(&naive, labels)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut z = vec![vec![0.0; p_target.len()]; p_source.len()];
    let mut nv = z.clone();
    let mut diff = z.clone();
    for (&(i, j), &(a, b)) in cells.iter().zip(&results) {
        z[i][j] = a;
        nv[i][j] = b;
        diff[i][j] = a - b;
    }
    let hist = src.class_histogram();
    let majority = *hist.iter().max().unwrap_or(&0) as f64 / n as f64;
    Ok(NoiseGridResult {
        noise_model: model,
        p_source_levels: p_source.to_vec(),
        p_target_levels: p_target.to_vec(),
        accuracy: BTreeMap::from([(ZDDA3.to_string(), z), (NAIVE.to_string(), nv)]),
        diff,
        n,
        majority_prior: majority,
        seed,
    })
}
