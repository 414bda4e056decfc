//! Central finite-difference check of the smooth-part gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{grad_smooth, SmnaeLayer};
use super::supervision::{build_laplacian, discrimination_term, supervision_from_classes, Laplacian};
use crate::error::Result;
use crate::numerics::{frobenius_sq, sigmoid, Matrix, Seed};

/// `||X - sigma(W' sigma(W X))||^2 + beta * trace(H^T H L)`.
pub fn smooth_objective(layer: &SmnaeLayer, x: &Matrix, lap: &Laplacian, beta: f64) -> Result<f64> {
    let h = layer.encode(x)?;
    let y = sigmoid(&layer.w_dec().matmul(&h)?);
    Ok(frobenius_sq(&x.sub(&y)?) + beta * discrimination_term(&h, lap)?)
}

/// Largest `|analytic - numeric|` over every weight, divided by the largest
/// analytic gradient magnitude.
pub fn finite_difference_error(layer: &SmnaeLayer, x: &Matrix, lap: &Laplacian, beta: f64, step: f64) -> Result<f64> {
    let (ge, gd) = grad_smooth(layer, x, lap, beta)?;
    let scale = ge.max_abs().max(gd.max_abs()).max(1e-12);
    let mut worst: f64 = 0.0;
    for (is_enc, grad) in [(true, &ge), (false, &gd)] {
        for r in 0..grad.rows() {
            for c in 0..grad.cols() {
                let perturbed = |delta: f64| -> Result<f64> {
                    let (mut e, mut d) = (layer.w_enc().clone(), layer.w_dec().clone());
                    let m = if is_enc { &mut e } else { &mut d };
                    m.set(r, c, m.get(r, c) + delta);
                    smooth_objective(&SmnaeLayer::new(e, d)?, x, lap, beta)
                };
                let numeric = (perturbed(step)? - perturbed(-step)?) / (2.0 * step);
                worst = worst.max((numeric - grad.get(r, c)).abs() / scale);
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub max_rel_error: f64,
    pub per_instance: Vec<f64>,
}

/// Random instances with feature dim at most 20, at most 16 samples, 2 or 3
/// classes and `beta` alternating between 0 and 0.5.
pub fn random_gradient_check(instances: usize, seed: Seed) -> Result<GradCheckReport> {
    let mut per_instance = Vec::with_capacity(instances);
    for k in 0..instances {
        let s = seed.derive(k as u64);
        let mut rng = s.rng();
        let d = rng.random_range(2..=20);
        let n = rng.random_range(2..=16);
        let hidden = rng.random_range(1..=10);
        let n_classes = rng.random_range(2..=3);
        let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        let x = Matrix::from_fn(d, n, |_, _| rng.random_range(0.0..1.0));
        let beta = if k % 2 == 0 { 0.0 } else { 0.5 };
        let layer = SmnaeLayer::initialize(d, hidden, s.derive(1));
        let lap = build_laplacian(&supervision_from_classes(&classes));
        per_instance.push(finite_difference_error(&layer, &x, &lap, beta, 1e-5)?);
    }
    Ok(GradCheckReport {
        instances,
        max_rel_error: per_instance.iter().copied().fold(0.0, f64::max),
        per_instance,
    })
}
