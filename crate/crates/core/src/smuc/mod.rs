//! Training with supervised means and unsupervised covariances: losses read only the
//! output mean, and the backward pass treats every covariance as a constant.

mod backward;
mod loss;
mod optim;
mod train;

pub use backward::{
    frozen_loss, frozen_mean_forward, gradcheck_frozen_cov, input_gradient, modified_backward,
    GradCheckOptions, GradCheckReport, GradientSet, LayerGradient,
};
pub use loss::{loss_gradient, loss_value, LossKind, Target};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState};
pub use train::{
    evaluate, predict, sample_entropy, train, train_with, CovarianceMode, EvalMetrics, LogRecord, Phase,
    TrainConfig, TrainingLog,
};
