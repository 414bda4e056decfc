//! The SMNAE layer: supervision and Laplacian construction, the loss and
//! its smooth gradient, proximal-gradient training and greedy stacking.

mod gradcheck;
mod model;
mod supervision;
mod train;

pub use gradcheck::{finite_difference_error, random_gradient_check, smooth_objective, GradCheckReport};
pub use model::{encode, grad_smooth, loss_smnae, LossTerms, SmnaeLayer, StackedSmnae};
pub use supervision::{
    build_laplacian, build_supervision_matrix, discrimination_term, supervision_from_classes,
    Laplacian, SupervisionMatrix,
};
pub use train::{
    train_layer, train_stacked, EpochRecord, LayerFit, StackedFit, StopReason, TrainConfig,
    TrainTrace, MIN_STEP,
};
