//! Binary RBF-kernel SVM trained by sequential minimal optimization, with
//! Platt-scaled probability outputs.

mod platt;
mod smo;

pub use platt::{fit_platt, PlattParams};
pub use smo::{train_svm, SvmFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Seed};

/// `exp(-gamma * ||x - y||^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(
            "rbf_kernel",
            format!("vectors of length {} and {}", x.len(), y.len()),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(rbf_unchecked(x, y, gamma))
}

#[inline]
pub(crate) fn rbf_unchecked(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `y_i * alpha_i` for each support vector.
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub platt: Option<PlattParams>,
}

impl SvmModel {
    pub fn feature_dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// `sum_i alpha_i k(sv_i, x) + bias`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.feature_dim() {
            if d != x.len() {
                return Err(Error::dims(
                    "decision_value",
                    format!("model expects {d} features, got {}", x.len()),
                ));
            }
        }
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * rbf_unchecked(sv, x, self.gamma))
            .sum();
        Ok(s + self.bias)
    }

    /// `1 / (1 + exp(A f + B))` with `f` the decision value.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let platt = self
            .platt
            .ok_or_else(|| Error::InvalidParameter("Platt parameters have not been fitted".into()))?;
        Ok(platt.probability(self.decision_value(x)?))
    }
}

pub fn decision_value(model: &SvmModel, x: &[f64]) -> Result<f64> {
    model.decision_value(x)
}

pub fn predict_proba(model: &SvmModel, x: &[f64]) -> Result<f64> {
    model.predict_proba(x)
}

/// Classifier settings. `gamma = None` means `1 / feature_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: Option<f64>,
    pub tol: f64,
    /// Pick `(C, gamma)` by 3-fold cross-validation over the grids below.
    pub grid_search: bool,
    pub c_grid: Vec<f64>,
    /// Multipliers of `1 / (feature_dim * mean feature variance)`, so the
    /// grid follows the spread of the features.
    pub gamma_grid: Vec<f64>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            grid_search: false,
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            gamma_grid: vec![0.1, 1.0, 10.0, 100.0],
        }
    }
}

/// Trains with the configured (or grid-searched) hyperparameters and fits
/// Platt scaling on the training decision values.
pub fn train_svm_with(features: &Matrix, labels: &[i8], cfg: &SvmConfig, seed: Seed) -> Result<SvmFit> {
    train_svm_grouped(features, labels, None, cfg, seed)
}

/// Like [`train_svm_with`], with cross-validation folds that never split a
/// group when `groups` (one id per column) is given.
pub fn train_svm_grouped(
    features: &Matrix,
    labels: &[i8],
    groups: Option<&[usize]>,
    cfg: &SvmConfig,
    seed: Seed,
) -> Result<SvmFit> {
    let dim = features.rows().max(1) as f64;
    let (c, gamma) = if cfg.grid_search {
        grid_search(features, labels, groups, cfg, seed)?
    } else {
        (cfg.c, cfg.gamma.unwrap_or(1.0 / dim))
    };
    train_svm(features, labels, c, gamma, cfg.tol)
}

/// `1 / (dim * v)` with `v` the per-feature variance averaged over features;
/// `1 / dim` when the features do not vary.
pub fn gamma_scale(features: &Matrix) -> f64 {
    let (d, n) = features.shape();
    let d = d.max(1) as f64;
    if n < 2 {
        return 1.0 / d;
    }
    let mut total = 0.0;
    for r in 0..features.rows() {
        let row = features.row(r);
        let mean = row.iter().sum::<f64>() / n as f64;
        total += row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    }
    let var = total / d;
    if var > 0.0 && var.is_finite() {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

/// 3-fold cross-validated accuracy over `c_grid x gamma_grid`. With
/// `groups`, whole groups are dealt to folds; otherwise single columns are.
/// Ties keep the earliest grid point.
pub fn grid_search(
    features: &Matrix,
    labels: &[i8],
    groups: Option<&[usize]>,
    cfg: &SvmConfig,
    seed: Seed,
) -> Result<(f64, f64)> {
    use rand::seq::SliceRandom;
    let n = features.cols();
    if labels.len() != n || groups.is_some_and(|g| g.len() != n) {
        return Err(Error::dims("grid_search", format!("{n} columns, {} labels", labels.len())));
    }
    let base = gamma_scale(features);
    let fold_of: Vec<usize> = match groups {
        Some(g) => {
            let mut ids: Vec<usize> = g.to_vec();
            ids.sort_unstable();
            ids.dedup();
            ids.shuffle(&mut seed.rng());
            let slot: std::collections::HashMap<usize, usize> =
                ids.iter().enumerate().map(|(k, &id)| (id, k % 3)).collect();
            g.iter().map(|id| slot[id]).collect()
        }
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed.rng());
            let mut fold_of = vec![0; n];
            for (k, &j) in order.iter().enumerate() {
                fold_of[j] = k % 3;
            }
            fold_of
        }
    };
    let folds: Vec<Vec<usize>> = (0..3).map(|f| (0..n).filter(|&j| fold_of[j] == f).collect()).collect();
    let mut best = (cfg.c, cfg.gamma.unwrap_or(base));
    let mut best_acc = -1.0;
    for &c in &cfg.c_grid {
        for &g in &cfg.gamma_grid {
            let gamma = g * base;
            let mut correct = 0usize;
            let mut total = 0usize;
            for held in &folds {
                let train_idx: Vec<usize> = (0..n).filter(|j| !held.contains(j)).collect();
                let y: Vec<i8> = train_idx.iter().map(|&j| labels[j]).collect();
                if !(y.contains(&1) && y.contains(&-1)) || held.is_empty() {
                    continue;
                }
                let fit = train_svm(&features.select_columns(&train_idx), &y, c, gamma, cfg.tol)?;
                for &j in held {
                    let f = fit.model.decision_value(&features.column(j))?;
                    if (f >= 0.0) == (labels[j] > 0) {
                        correct += 1;
                    }
                    total += 1;
                }
            }
            let acc = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
            if acc > best_acc {
                best_acc = acc;
                best = (c, gamma);
            }
        }
    }
    Ok(best)
}
