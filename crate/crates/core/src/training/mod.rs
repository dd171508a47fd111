//! Training of classical cascades and greedy training of quantum blocks.

pub mod ansatz;
pub mod cascade;
pub mod contrastive;
pub mod greedy;

pub use ansatz::{ansatz_unitary, ANSATZ_PARAMS};
pub use cascade::{
    classify, preprocess_image, train_crb_cascade, Algorithm, CascadeArch, CascadeModel, EpochMetrics, Example,
    Linear, LossKind, OptimizerConfig, TrainingOutcome,
};
pub use contrastive::{contrastive_loss, ContrastiveLoss, ContrastiveLossConfig};
pub use greedy::{greedy_train_qrb_stack, qrb_from_vector, GreedyConfig, GreedyOutcome, QRB_PARAMS};
