//! Equal-error-rate evaluation, kinship pair reports and the digit
//! benchmark.

mod eer;
mod kinship;
mod mnist;

pub use eer::{compute_eer, roc_csv, roc_points, EvalResult, RocPoint};
pub use kinship::{evaluate_pairs, symmetric_score, FusionReport, KinshipReport, PairScore};
pub use mnist::{mnist_benchmark, ArmResult, MnistConfig, MnistReport, OneVsRest};
