use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{ImageTensor, LabeledDataset};
use crate::error::{Result, ZddaError};

/// Images evaluated per parallel work item.
pub const EVAL_CHUNK: usize = 256;

/// A classifier over one input stream.
pub trait Predictor: Sync {
    fn class_count(&self) -> usize;

    /// Class scores `[n, K]`; prediction is the row argmax.
    fn scores(&self, images: &[ImageTensor]) -> Result<Array2<f32>>;

    fn predict(&self, images: &[ImageTensor]) -> Result<Vec<usize>> {
        Ok(self.scores(images)?.rows().into_iter().map(argmax).collect())
    }
}

/// A classifier over two index-aligned input streams.
pub trait DualPredictor: Sync {
    fn class_count(&self) -> usize;
    fn predict_dual(&self, source: &[ImageTensor], target: &[ImageTensor]) -> Result<Vec<usize>>;
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f32>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub overall_accuracy: f64,
    /// Recall per class; `None` for classes without test items.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub mean_per_class_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn from_predictions(predicted: &[usize], labels: &[usize], class_count: usize) -> Result<Self> {
        if predicted.len() != labels.len() {
            return Err(ZddaError::Consistency(format!(
                "{} predictions for {} labels",
                predicted.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(ZddaError::Capacity("cannot evaluate on an empty dataset".into()));
        }
        let mut confusion = vec![vec![0u64; class_count]; class_count];
        for (&p, &y) in predicted.iter().zip(labels) {
            if p >= class_count || y >= class_count {
                return Err(ZddaError::Consistency(format!(
                    "class index out of range for {class_count} classes"
                )));
            }
            confusion[y][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let n: u64 = confusion.iter().flatten().sum();
        let hits: u64 = (0..confusion.len()).map(|k| confusion[k][k]).sum();
        let per_class: Vec<Option<f64>> = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let total: u64 = row.iter().sum();
                (total > 0).then(|| row[k] as f64 / total as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let mean = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        Self {
            n: n as usize,
            overall_accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            per_class_accuracy: per_class,
            mean_per_class_accuracy: mean,
            confusion,
        }
    }

    /// `overall/per-class` in percent with two decimals.
    pub fn cell(&self) -> String {
        format!(
            "{:.2}/{:.2}",
            self.overall_accuracy * 100.0,
            self.mean_per_class_accuracy * 100.0
        )
    }
}

fn check_classes(have: usize, ds: &LabeledDataset) -> Result<()> {
    if have != ds.class_count() {
        return Err(ZddaError::Consistency(format!(
            "predictor has {have} classes, {} has {}",
            ds.name(),
            ds.class_count()
        )));
    }
    Ok(())
}

/// Runs `f` over aligned chunks in parallel and concatenates the outputs.
pub(crate) fn chunked<F>(n: usize, f: F) -> Result<Vec<usize>>
where
    F: Fn(std::ops::Range<usize>) -> Result<Vec<usize>> + Sync,
{
    let parts = (0..n.div_ceil(EVAL_CHUNK))
        .into_par_iter()
        .map(|c| f(c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(n)))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn evaluate(predictor: &dyn Predictor, ds: &LabeledDataset) -> Result<EvalReport> {
    check_classes(predictor.class_count(), ds)?;
    let predicted = chunked(ds.len(), |r| predictor.predict(&ds.images()[r]))?;
    EvalReport::from_predictions(&predicted, ds.labels(), ds.class_count())
}

/// Evaluates a two-stream predictor; the streams must carry equal labels.
pub fn evaluate_dual(
    predictor: &dyn DualPredictor,
    source: &LabeledDataset,
    target: &LabeledDataset,
) -> Result<EvalReport> {
    check_classes(predictor.class_count(), source)?;
    if source.labels() != target.labels() {
        return Err(ZddaError::Consistency(format!(
            "{} and {} are not index-aligned",
            source.name(),
            target.name()
        )));
    }
    let predicted = chunked(source.len(), |r| {
        predictor.predict_dual(&source.images()[r.clone()], &target.images()[r])
    })?;
    EvalReport::from_predictions(&predicted, source.labels(), source.class_count())
}
