//! Vidlet extraction, the three representation stages (spatial frame pairs,
//! pivot-neighbor variation, vidlet aggregate), the SVM head and fused pair
//! scoring.

mod codec;
mod model;
mod stages;
mod video;

pub use model::{
    report_from_probs, score_video_pair, score_with_fusion, train_pipeline, vidlet_features,
    vidlet_probabilities, Fusion, PipelineConfig, PipelineFit, PipelineModel, ScoreReport,
    StageConfig, FORMAT_VERSION,
};
pub use stages::{stage1_input, stage2_input, stage3_input};
pub use video::{cycle_align, extract_vidlets, VideoSequence, Vidlet};

#[cfg(test)]
mod tests;
