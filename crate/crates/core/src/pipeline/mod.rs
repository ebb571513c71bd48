//! The three-step training procedure and its test-time assemblies.

pub mod artifacts;
pub mod assembly;
pub mod steps;

pub use artifacts::{Provenance, ZddaArtifacts};
pub use assembly::{
    assemble_fusion, assemble_zdda2, ComposedClassifier, FusionAssembly, FusionMode, GrayInput,
};
pub use steps::{
    pretrain_target, step1_align, step1_align_target, step2_joint, step3_fusion, train_fusion,
    AlignSide, FusionAugment, FusionStates, SharedBranch, StepRecord,
};
