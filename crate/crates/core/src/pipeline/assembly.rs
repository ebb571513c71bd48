//! Test-time compositions of trained branches and heads.

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::artifacts::ZddaArtifacts;
use crate::datasets::ImageTensor;
use crate::error::{Result, ZddaError};
use crate::eval::{DualPredictor, Predictor};
use crate::model::network::{BranchState, ClassifierState};

/// `head . branch` over one input modality.
#[derive(Debug, Clone, Copy)]
pub struct ComposedClassifier<'a> {
    pub branch: &'a BranchState,
    pub head: &'a ClassifierState,
}

impl<'a> ComposedClassifier<'a> {
    pub fn new(branch: &'a BranchState, head: &'a ClassifierState) -> Result<Self> {
        if branch.feature_dim() != head.input_dim {
            return Err(ZddaError::Dimension(format!(
                "branch {} yields {} features, head takes {}",
                branch.tag.as_str(),
                branch.feature_dim(),
                head.input_dim
            )));
        }
        Ok(Self { branch, head })
    }

    pub fn input_channels(&self) -> usize {
        self.branch.spec.input_channels
    }
}

impl Predictor for ComposedClassifier<'_> {
    fn class_count(&self) -> usize {
        self.head.class_count
    }

    fn scores(&self, images: &[ImageTensor]) -> Result<Array2<f32>> {
        self.head.forward_logits(self.branch.forward_features(images)?.view())
    }
}

/// Feeds a gray classifier with color images converted by channel mean.
pub struct GrayInput<P>(pub P);

impl<P: Predictor> Predictor for GrayInput<P> {
    fn class_count(&self) -> usize {
        self.0.class_count()
    }

    fn scores(&self, images: &[ImageTensor]) -> Result<Array2<f32>> {
        let gray: Vec<ImageTensor> = images.iter().map(ImageTensor::to_gray).collect();
        self.0.scores(&gray)
    }
}

/// `(C_source, C_target)`: the source head over `s2` and over `t`.
pub fn assemble_zdda2<'a>(
    s2: &'a BranchState,
    t: &'a BranchState,
    source_classifier: &'a ClassifierState,
) -> Result<(ComposedClassifier<'a>, ComposedClassifier<'a>)> {
    Ok((
        ComposedClassifier::new(s2, source_classifier)?,
        ComposedClassifier::new(t, source_classifier)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `s3 + s4`, both fed source images; only valid inside fusion training.
    Train,
    /// `s3` on source images, `t` on target images.
    TestDual,
    /// `s3` and `s4` both on source images.
    TestSourceOnly,
}

/// Two branches feeding the joint classifier through concatenation.
#[derive(Debug, Clone, Copy)]
pub struct FusionAssembly<'a> {
    pub branch_for_source_input: &'a BranchState,
    pub branch_for_target_input: &'a BranchState,
    pub joint_classifier: &'a ClassifierState,
    pub mode: FusionMode,
}

impl FusionAssembly<'_> {
    pub fn scores(&self, source: &[ImageTensor], target: &[ImageTensor]) -> Result<Array2<f32>> {
        let fa = self.branch_for_source_input.forward_features(source)?;
        let fb = match self.mode {
            FusionMode::TestDual => self.branch_for_target_input.forward_features(target)?,
            FusionMode::Train | FusionMode::TestSourceOnly => {
                self.branch_for_target_input.forward_features(source)?
            }
        };
        self.joint_classifier
            .forward_logits(concatenate![Axis(1), fa, fb].view())
    }
}

impl DualPredictor for FusionAssembly<'_> {
    fn class_count(&self) -> usize {
        self.joint_classifier.class_count
    }

    fn predict_dual(&self, source: &[ImageTensor], target: &[ImageTensor]) -> Result<Vec<usize>> {
        if source.len() != target.len() && self.mode == FusionMode::TestDual {
            return Err(ZddaError::Consistency("fusion streams differ in length".into()));
        }
        let s = self.scores(source, target)?;
        Ok(s.rows().into_iter().map(crate::eval::argmax).collect())
    }
}

/// Test-time fusion wiring from trained artifacts.
pub fn assemble_fusion(artifacts: &ZddaArtifacts, mode: FusionMode) -> Result<FusionAssembly<'_>> {
    let fusion = artifacts
        .fusion
        .as_ref()
        .ok_or_else(|| ZddaError::Configuration("fusion step has not been run".into()))?;
    let target = match mode {
        FusionMode::Train => {
            return Err(ZddaError::Configuration(
                "train wiring exists only inside fusion training".into(),
            ))
        }
        FusionMode::TestDual => &artifacts.t,
        FusionMode::TestSourceOnly => &fusion.s4,
    };
    if fusion.joint.input_dim != fusion.s3.feature_dim() + target.feature_dim() {
        return Err(ZddaError::Dimension("joint classifier width mismatch".into()));
    }
    Ok(FusionAssembly {
        branch_for_source_input: &fusion.s3,
        branch_for_target_input: target,
        joint_classifier: &fusion.joint,
        mode,
    })
}
