use ndarray::ArrayView2;

use super::report::{DualPredictor, Predictor};
use crate::datasets::ImageTensor;
use crate::error::{Result, ZddaError};
use crate::model::loss::softmax;

/// Per row, the class holding the single highest probability across both
/// tables. Ties go to the source table, then to the lowest class index.
pub fn fuse_probabilities(source: ArrayView2<'_, f32>, target: ArrayView2<'_, f32>) -> Result<Vec<usize>> {
    if source.dim() != target.dim() {
        return Err(ZddaError::Consistency(format!(
            "probability tables {:?} and {:?} differ",
            source.dim(),
            target.dim()
        )));
    }
    Ok(source
        .rows()
        .into_iter()
        .zip(target.rows())
        .map(|(s, t)| {
            let mut best = (s[0], 0);
            for (k, &p) in s.iter().chain(t.iter()).enumerate().skip(1) {
                if p > best.0 {
                    best = (p, k % s.len());
                }
            }
            best.1
        })
        .collect())
}

/// Naive fusion of two single-domain classifiers on aligned batches.
pub fn naive_fusion_predict(
    c_source: &dyn Predictor,
    c_target: &dyn Predictor,
    source: &[ImageTensor],
    target: &[ImageTensor],
) -> Result<Vec<usize>> {
    if source.len() != target.len() {
        return Err(ZddaError::Consistency(format!(
            "{} source vs {} target images",
            source.len(),
            target.len()
        )));
    }
    let ps = softmax(c_source.scores(source)?.view());
    let pt = softmax(c_target.scores(target)?.view());
    fuse_probabilities(ps.view(), pt.view())
}

/// [`naive_fusion_predict`] as a two-stream predictor.
pub struct NaiveFusion<'a> {
    pub source: &'a dyn Predictor,
    pub target: &'a dyn Predictor,
}

impl DualPredictor for NaiveFusion<'_> {
    fn class_count(&self) -> usize {
        self.source.class_count()
    }

    fn predict_dual(&self, source: &[ImageTensor], target: &[ImageTensor]) -> Result<Vec<usize>> {
        naive_fusion_predict(self.source, self.target, source, target)
    }
}
