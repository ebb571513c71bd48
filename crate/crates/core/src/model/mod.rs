//! Split networks, losses, optimizer, training loop and checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod params;
pub mod train;

pub use loss::{l2_alignment_loss, softmax, softmax_cross_entropy};
pub use network::{
    build_branch, build_classifier, BranchState, BranchTag, ClassifierKind, ClassifierState,
    SplitNetworkSpec,
};
pub use optim::{MomentumSgd, Trainable};
pub use params::{Param, ParamSet, Real};
pub use train::{train_supervised, LossWeights, TrainHyper, TrainLog};
