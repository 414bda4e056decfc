use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stages::{stage1_input, stage2_input, stage3_input};
use super::video::{cycle_align, extract_vidlets, VideoSequence};
use crate::error::{Error, Result};
use crate::data::family_groups;
use crate::layer::{
    build_laplacian, supervision_from_classes, train_stacked, StackedSmnae, TrainConfig,
    TrainTrace,
};
use crate::mixed_norm::ClassPartition;
use crate::numerics::{Matrix, Seed};
use crate::svm::{train_svm_grouped, SvmConfig, SvmModel};

pub const FORMAT_VERSION: u32 = 1;

/// Full-size hidden widths of the three stages for 128x128 frames.
const STANDARD_WIDTHS: [&[usize]; 3] = [&[8192, 4096, 2048], &[2304, 1024], &[3072, 2048]];

/// How per-vidlet probabilities combine into one score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    #[default]
    Sum,
    Max,
}

impl Fusion {
    pub fn fuse(self, probs: &[f64]) -> f64 {
        match self {
            Fusion::Sum => probs.iter().sum(),
            Fusion::Max => probs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Default kin threshold for `k` vidlets.
    pub fn threshold(self, k: usize) -> f64 {
        match self {
            Fusion::Sum => 0.5 * k as f64,
            Fusion::Max => 0.5,
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Sum => "sum",
            Fusion::Max => "max",
        })
    }
}

impl FromStr for Fusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Fusion::Sum),
            "max" => Ok(Fusion::Max),
            other => Err(Error::InvalidParameter(format!("unknown fusion rule '{other}'"))),
        }
    }
}

/// Widths and optimizer constants for one stacked stage.
///
/// Stage losses are sums over several hundred columns, and the
/// discrimination term grows with the square of the column count, so the
/// defaults use a smaller step (`eta0 = 0.01`) and `beta = 1e-4` in place of
/// the single-layer defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    /// Full-size hidden widths, divided by the pipeline `scale`. Unset means
    /// the stage's standard widths.
    pub widths: Option<Vec<usize>>,
    pub lambda: f64,
    pub beta: f64,
    pub eta0: f64,
    pub max_epochs: usize,
    pub rel_tol: f64,
}

impl StageConfig {
    fn with_widths(widths: Option<&[usize]>) -> Self {
        let t = TrainConfig::default();
        Self {
            widths: widths.map(<[usize]>::to_vec),
            lambda: t.lambda,
            beta: 1e-4,
            eta0: 0.01,
            max_epochs: 300,
            rel_tol: t.rel_tol,
        }
    }

    fn train_config(&self, p: f64, seed: Seed) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            beta: self.beta,
            p,
            eta0: self.eta0,
            max_epochs: self.max_epochs,
            rel_tol: self.rel_tol,
            seed: seed.0,
        }
    }
}

impl Default for StageConfig {
    fn default() -> Self {
        Self::with_widths(None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub z: usize,
    pub p: f64,
    /// Every stage width is divided by this (rounded down, at least 1).
    pub scale: usize,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub stage3: StageConfig,
    pub svm: SvmConfig,
    pub fusion: Fusion,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            z: 2,
            p: 0.8,
            scale: 64,
            stage1: StageConfig::with_widths(Some(&STANDARD_WIDTHS[0])),
            stage2: StageConfig::with_widths(Some(&STANDARD_WIDTHS[1])),
            stage3: StageConfig::with_widths(Some(&STANDARD_WIDTHS[2])),
            svm: SvmConfig {
                grid_search: true,
                ..SvmConfig::default()
            },
            fusion: Fusion::Sum,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z == 0 {
            return Err(Error::InvalidParameter("z must be >= 1".into()));
        }
        if self.scale == 0 {
            return Err(Error::InvalidParameter("scale must be >= 1".into()));
        }
        for (k, s) in self.stages().iter().enumerate() {
            if s.widths.as_ref().is_some_and(Vec::is_empty) {
                return Err(Error::InvalidParameter(format!("stage{}.widths must be nonempty", k + 1)));
            }
            s.train_config(self.p, Seed(0)).validate()?;
        }
        Ok(())
    }

    fn stages(&self) -> [&StageConfig; 3] {
        [&self.stage1, &self.stage2, &self.stage3]
    }

    /// Hidden widths of stage `index` (0-based) after dividing by `scale`.
    pub fn scaled_widths(&self, index: usize) -> Vec<usize> {
        let full = self.stages()[index].widths.as_deref().unwrap_or(STANDARD_WIDTHS[index]);
        full.iter().map(|w| (w / self.scale).max(1)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineModel {
    pub stage1: StackedSmnae,
    pub stage2: StackedSmnae,
    pub stage3: StackedSmnae,
    pub classifier: SvmModel,
    pub z: usize,
    pub fusion: Fusion,
    pub format_version: u32,
}

impl PipelineModel {
    /// Checks the dimension chain between frames, stages and classifier.
    pub fn new(
        stage1: StackedSmnae,
        stage2: StackedSmnae,
        stage3: StackedSmnae,
        classifier: SvmModel,
        z: usize,
        fusion: Fusion,
    ) -> Result<Self> {
        if z == 0 {
            return Err(Error::InvalidParameter("z must be >= 1".into()));
        }
        if stage1.input_dim() % 2 != 0 {
            return Err(Error::dims("PipelineModel", format!("stage 1 input {} is odd", stage1.input_dim())));
        }
        let checks = [
            ("stage 2 input", stage2.input_dim(), 2 * stage1.output_dim()),
            ("stage 3 input", stage3.input_dim(), 2 * z * stage2.output_dim()),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::dims("PipelineModel", format!("{what} is {got}, expected {want}")));
            }
        }
        if let Some(d) = classifier.feature_dim() {
            if d != stage3.output_dim() {
                return Err(Error::dims(
                    "PipelineModel",
                    format!("classifier expects {d} features, stage 3 emits {}", stage3.output_dim()),
                ));
            }
        }
        Ok(Self {
            stage1,
            stage2,
            stage3,
            classifier,
            z,
            fusion,
            format_version: FORMAT_VERSION,
        })
    }

    pub fn frame_dim(&self) -> usize {
        self.stage1.input_dim() / 2
    }
}

/// One stage-1 block per vidlet pair, in vidlet order.
fn stage1_blocks(a: &VideoSequence, b: &VideoSequence, z: usize) -> Result<Vec<Matrix>> {
    if a.frame_dim() != b.frame_dim() {
        return Err(Error::dims(
            "vidlet pairing",
            format!("frame dims {} and {}", a.frame_dim(), b.frame_dim()),
        ));
    }
    let (a, b) = cycle_align(a, b);
    let (va, vb) = (extract_vidlets(&a, z)?, extract_vidlets(&b, z)?);
    va.iter().zip(&vb).map(|(x, y)| stage1_input(x, y)).collect()
}

fn split_columns(m: &Matrix, width: usize) -> Vec<Matrix> {
    (0..m.cols() / width)
        .map(|k| m.select_columns(&(k * width..(k + 1) * width).collect::<Vec<_>>()))
        .collect()
}

fn forward_stage2_inputs(stage1: &StackedSmnae, x1: &Matrix, z: usize) -> Result<Matrix> {
    let h1 = stage1.encode(x1)?;
    let blocks: Vec<Matrix> = split_columns(&h1, 2 * z + 1)
        .iter()
        .map(|h| stage2_input(h, z))
        .collect::<Result<_>>()?;
    Matrix::hcat(&blocks.iter().collect::<Vec<_>>())
}

fn forward_stage3_inputs(stage2: &StackedSmnae, x2: &Matrix, z: usize) -> Result<Matrix> {
    let h2 = stage2.encode(x2)?;
    let blocks: Vec<Matrix> = split_columns(&h2, 2 * z)
        .iter()
        .map(|h| stage3_input(h, z))
        .collect::<Result<_>>()?;
    Matrix::hcat(&blocks.iter().collect::<Vec<_>>())
}

/// Classifier features, one column per vidlet pair of `(a, b)`.
pub fn vidlet_features(model: &PipelineModel, a: &VideoSequence, b: &VideoSequence) -> Result<Matrix> {
    if a.frame_dim() != model.frame_dim() {
        return Err(Error::dims(
            "score_video_pair",
            format!("model expects frame_dim {}, video has {}", model.frame_dim(), a.frame_dim()),
        ));
    }
    let blocks = stage1_blocks(a, b, model.z)?;
    let x1 = Matrix::hcat(&blocks.iter().collect::<Vec<_>>())?;
    let x2 = forward_stage2_inputs(&model.stage1, &x1, model.z)?;
    let x3 = forward_stage3_inputs(&model.stage2, &x2, model.z)?;
    model.stage3.encode(&x3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_vidlet_probs: Vec<f64>,
    pub fusion: Fusion,
    pub fused_score: f64,
    pub kin: bool,
    pub threshold: f64,
}

impl ScoreReport {
    /// Fused score on a per-vidlet scale: the sum rule is divided by the
    /// vidlet count so pairs of different lengths share one threshold sweep.
    pub fn normalized_score(&self) -> f64 {
        match self.fusion {
            Fusion::Sum => self.fused_score / self.per_vidlet_probs.len() as f64,
            Fusion::Max => self.fused_score,
        }
    }
}

pub fn vidlet_probabilities(model: &PipelineModel, a: &VideoSequence, b: &VideoSequence) -> Result<Vec<f64>> {
    let f = vidlet_features(model, a, b)?;
    (0..f.cols())
        .map(|j| model.classifier.predict_proba(&f.column(j)))
        .collect()
}

pub fn report_from_probs(probs: Vec<f64>, fusion: Fusion) -> ScoreReport {
    let fused_score = fusion.fuse(&probs);
    let threshold = fusion.threshold(probs.len());
    ScoreReport {
        kin: fused_score >= threshold,
        per_vidlet_probs: probs,
        fusion,
        fused_score,
        threshold,
    }
}

/// Scores `(a, b)` with the model's fusion rule. Order matters: `a` fills the
/// top half of every stage-1 column.
pub fn score_video_pair(model: &PipelineModel, a: &VideoSequence, b: &VideoSequence) -> Result<ScoreReport> {
    score_with_fusion(model, a, b, model.fusion)
}

pub fn score_with_fusion(
    model: &PipelineModel,
    a: &VideoSequence,
    b: &VideoSequence,
    fusion: Fusion,
) -> Result<ScoreReport> {
    Ok(report_from_probs(vidlet_probabilities(model, a, b)?, fusion))
}

/// Training diagnostics kept alongside the model.
#[derive(Clone, Debug)]
pub struct PipelineFit {
    pub model: PipelineModel,
    pub stage_traces: [Vec<TrainTrace>; 3],
    pub svm_converged: bool,
    /// Fraction of training vidlet pairs the classifier gets right.
    pub svm_train_accuracy: f64,
}

fn train_stage(x: &Matrix, classes: &[usize], widths: &[usize], cfg: TrainConfig) -> Result<crate::layer::StackedFit> {
    let part = ClassPartition::from_labels(x, classes)?;
    let lap = build_laplacian(&supervision_from_classes(classes));
    train_stacked(x, &part, &lap, widths, &cfg)
}

/// Trains the three stages in sequence and the classifier on stage-3
/// features. Every column inherits the kin label of its pair.
pub fn train_pipeline(pairs: &[(VideoSequence, VideoSequence, bool)], cfg: &PipelineConfig) -> Result<PipelineFit> {
    cfg.validate()?;
    if !(pairs.iter().any(|p| p.2) && pairs.iter().any(|p| !p.2)) {
        return Err(Error::InsufficientData(
            "pipeline training needs at least one kin and one non-kin pair".into(),
        ));
    }
    let z = cfg.z;
    let seed = Seed(cfg.seed);
    let frame_dim = pairs[0].0.frame_dim();

    let families: Vec<(&str, &str)> = pairs.iter().map(|(a, b, _)| (a.family_id.as_str(), b.family_id.as_str())).collect();
    let (pair_group, _) = family_groups(&families);

    let mut blocks = Vec::new();
    let mut vidlet_kin = Vec::new();
    let mut vidlet_group = Vec::new();
    for (i, (a, b, kin)) in pairs.iter().enumerate() {
        if a.frame_dim() != frame_dim || b.frame_dim() != frame_dim {
            return Err(Error::dims(
                "train_pipeline",
                format!("pair {i} has frame dims {} and {}, expected {frame_dim}", a.frame_dim(), b.frame_dim()),
            ));
        }
        for blk in stage1_blocks(a, b, z)? {
            blocks.push(blk);
            vidlet_kin.push(*kin);
            vidlet_group.push(pair_group[i]);
        }
    }
    let class_of = |kin: bool| usize::from(kin);
    let x1 = Matrix::hcat(&blocks.iter().collect::<Vec<_>>())?;
    drop(blocks);

    let c1: Vec<usize> = vidlet_kin.iter().flat_map(|&k| std::iter::repeat_n(class_of(k), 2 * z + 1)).collect();
    let fit1 = train_stage(&x1, &c1, &cfg.scaled_widths(0), cfg.stage1.train_config(cfg.p, seed.derive(1)))?;

    let x2 = forward_stage2_inputs(&fit1.stack, &x1, z)?;
    let c2: Vec<usize> = vidlet_kin.iter().flat_map(|&k| std::iter::repeat_n(class_of(k), 2 * z)).collect();
    let fit2 = train_stage(&x2, &c2, &cfg.scaled_widths(1), cfg.stage2.train_config(cfg.p, seed.derive(2)))?;

    let x3 = forward_stage3_inputs(&fit2.stack, &x2, z)?;
    let c3: Vec<usize> = vidlet_kin.iter().map(|&k| class_of(k)).collect();
    let fit3 = train_stage(&x3, &c3, &cfg.scaled_widths(2), cfg.stage3.train_config(cfg.p, seed.derive(3)))?;

    let features = fit3.stack.encode(&x3)?;
    let labels: Vec<i8> = vidlet_kin.iter().map(|&k| if k { 1 } else { -1 }).collect();
    let svm = train_svm_grouped(&features, &labels, Some(&vidlet_group), &cfg.svm, seed.derive(4))?;
    let mut correct = 0usize;
    for (j, &y) in labels.iter().enumerate() {
        if (svm.model.decision_value(&features.column(j))? >= 0.0) == (y > 0) {
            correct += 1;
        }
    }

    Ok(PipelineFit {
        model: PipelineModel::new(fit1.stack, fit2.stack, fit3.stack, svm.model, z, cfg.fusion)?,
        stage_traces: [fit1.traces, fit2.traces, fit3.traces],
        svm_converged: svm.converged,
        svm_train_accuracy: correct as f64 / labels.len() as f64,
    })
}
