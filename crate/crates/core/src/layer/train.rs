use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{evaluate, gradients_from, SmnaeLayer, StackedSmnae};
use super::supervision::Laplacian;
use crate::error::{Error, Result};
use crate::mixed_norm::{check_p, ClassPartition, ProxConfig, ProxSolver};
use crate::numerics::{Matrix, Seed};

/// Smallest step the backtracking search will try.
pub const MIN_STEP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub beta: f64,
    pub p: f64,
    pub eta0: f64,
    pub max_epochs: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            beta: 1e-3,
            p: 0.8,
            eta0: 0.1,
            max_epochs: 500,
            rel_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        for (name, v) in [("lambda", self.lambda), ("beta", self.beta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return Err(Error::InvalidParameter(format!("eta0 must be > 0, got {}", self.eta0)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        Ok(())
    }

    pub fn seed(&self) -> Seed {
        Seed(self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    /// Accepted step size; 0 for the initial record.
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
    StepUnderflow,
}

/// Loss per accepted epoch, starting with the initial weights at epoch 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn initial_total(&self) -> Option<f64> {
        self.records.first().map(|r| r.total)
    }

    pub fn final_total(&self) -> Option<f64> {
        self.records.last().map(|r| r.total)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,j1,j2,j3,step\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e}",
                r.epoch, r.total, r.j1, r.j2, r.j3, r.step
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct LayerFit {
    pub layer: SmnaeLayer,
    pub trace: TrainTrace,
    pub stop: StopReason,
}

/// Proximal-gradient training of one layer.
///
/// Each epoch takes a joint step: the encoder goes through the `l2,p`
/// proximal operator, the decoder takes a plain gradient step. The step is
/// halved until the total loss decreases; after an accepted step it may
/// double again, up to `eta0`.
pub fn train_layer(
    x: &Matrix,
    part: &ClassPartition,
    lap: &Laplacian,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<LayerFit> {
    cfg.validate()?;
    if hidden == 0 {
        return Err(Error::InvalidParameter("hidden size must be >= 1".into()));
    }
    if x.cols() < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs at least 2 samples, got {}",
            x.cols()
        )));
    }
    if x.cols() != lap.len() || part.num_samples() != x.cols() || part.feature_dim() != x.rows() {
        return Err(Error::dims(
            "train_layer",
            format!(
                "batch {}x{}, partition {}x{}, Laplacian {n}x{n}",
                x.rows(),
                x.cols(),
                part.feature_dim(),
                part.num_samples(),
                n = lap.len()
            ),
        ));
    }
    x.ensure_finite("training batch")?;

    let layer = SmnaeLayer::initialize(x.rows(), hidden, cfg.seed());
    let solver = ProxSolver::new(part)?;
    let mut current = evaluate(&layer, x, part, lap, cfg.lambda, cfg.beta, cfg.p)?;
    let mut layer = layer;
    let mut trace = TrainTrace {
        records: vec![record(0, &current.terms, 0.0)],
    };
    let mut eta = cfg.eta0;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let (g_enc, g_dec) = gradients_from(&layer, x, &current, cfg.beta)?;
        if !g_enc.is_finite() || !g_dec.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "non-finite gradient".into(),
            });
        }
        let accepted = loop {
            if eta < MIN_STEP {
                break None;
            }
            match try_step(&layer, x, part, lap, cfg, &solver, &g_enc, &g_dec, eta)? {
                Some((cand, ev)) if ev.terms.total < current.terms.total => break Some((cand, ev)),
                _ => eta *= 0.5,
            }
        };
        let Some((next_layer, next)) = accepted else {
            stop = StopReason::StepUnderflow;
            break;
        };
        let prev_total = current.terms.total;
        layer = next_layer;
        current = next;
        trace.records.push(record(epoch, &current.terms, eta));
        let rel = (prev_total - current.terms.total) / prev_total.abs().max(1e-300);
        if rel < cfg.rel_tol {
            stop = StopReason::Converged;
            break;
        }
        eta = (eta * 2.0).min(cfg.eta0);
    }
    Ok(LayerFit { layer, trace, stop })
}

#[allow(clippy::too_many_arguments)]
fn try_step(
    layer: &SmnaeLayer,
    x: &Matrix,
    part: &ClassPartition,
    lap: &Laplacian,
    cfg: &TrainConfig,
    solver: &ProxSolver,
    g_enc: &Matrix,
    g_dec: &Matrix,
    eta: f64,
) -> Result<Option<(SmnaeLayer, super::model::Evaluation)>> {
    let a = layer.w_enc().add_scaled(-eta, g_enc)?;
    let w_dec = layer.w_dec().add_scaled(-eta, g_dec)?;
    if !a.is_finite() || !w_dec.is_finite() {
        return Ok(None);
    }
    let prox = ProxConfig {
        lambda: cfg.lambda,
        eta,
        p: cfg.p,
        ..ProxConfig::default()
    };
    let w_enc = solver.solve(&a, &prox)?.w;
    let cand = SmnaeLayer::new(w_enc, w_dec)?;
    match evaluate(&cand, x, part, lap, cfg.lambda, cfg.beta, cfg.p) {
        Ok(ev) => Ok(Some((cand, ev))),
        Err(Error::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn record(epoch: usize, t: &super::model::LossTerms, step: f64) -> EpochRecord {
    EpochRecord {
        epoch,
        total: t.total,
        j1: t.j1,
        j2: t.j2,
        j3: t.j3,
        step,
    }
}

#[derive(Clone, Debug)]
pub struct StackedFit {
    pub stack: StackedSmnae,
    pub traces: Vec<TrainTrace>,
}

/// Greedy layer-wise training. Layer `k` trains on the encoding produced by
/// layer `k - 1` with the same class membership and Laplacian; layer 0 uses
/// `cfg.seed` directly so a one-layer stack equals [`train_layer`].
pub fn train_stacked(
    x: &Matrix,
    part: &ClassPartition,
    lap: &Laplacian,
    hidden_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<StackedFit> {
    if hidden_sizes.is_empty() {
        return Err(Error::InvalidParameter("hidden_sizes must be nonempty".into()));
    }
    let mut layers = Vec::with_capacity(hidden_sizes.len());
    let mut traces = Vec::with_capacity(hidden_sizes.len());
    let mut input = x.clone();
    let mut input_part = part.clone();
    for (k, &hidden) in hidden_sizes.iter().enumerate() {
        let layer_cfg = TrainConfig {
            seed: if k == 0 { cfg.seed } else { cfg.seed().derive(k as u64).0 },
            ..*cfg
        };
        let fit = train_layer(&input, &input_part, lap, hidden, &layer_cfg)?;
        input = fit.layer.encode(&input)?;
        input_part = part.regroup(&input)?;
        layers.push(fit.layer);
        traces.push(fit.trace);
    }
    Ok(StackedFit {
        stack: StackedSmnae::new(layers)?,
        traces,
    })
}
