//! Loss, toy encoders, synthetic data and the training loop.

mod encoder;
mod finite_diff;
mod loss;
mod synthetic;
mod train;

pub use encoder::ToyEncoder;
pub use finite_diff::finite_diff_grad;
pub use loss::{
    cosine_with_grad, info_nce_alpha, info_nce_alpha_grad, loss_grad_descriptors, DescriptorGrad,
    LossConfig, ScoreLoss,
};
pub use synthetic::{generate_synthetic_pair, SyntheticWorld, RAY_STEP};
pub use train::{
    init_model, mean_loss, pair_loss, sample_pair, setup, top1_accuracy, train_toy, Pair,
    TrainConfig, TrainReport, TrainResult,
};
