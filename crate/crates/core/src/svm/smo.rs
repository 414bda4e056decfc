use super::platt::fit_platt;
use super::{rbf_unchecked, SvmModel};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SvmFit {
    pub model: SvmModel,
    /// Dual objective `sum alpha - 1/2 alpha^T Q alpha` after every update,
    /// starting from `alpha = 0`.
    pub dual_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Trains a C-SVM on the columns of `features` (one sample per column).
///
/// Working-set selection takes the maximal KKT-violating pair with ties
/// going to the lowest index; the stopping rule is a KKT gap below `tol`.
pub fn train_svm(features: &Matrix, labels: &[i8], c: f64, gamma: f64, tol: f64) -> Result<SvmFit> {
    let n = features.cols();
    if labels.len() != n {
        return Err(Error::dims(
            "train_svm",
            format!("{} labels for {n} samples", labels.len()),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::InvalidParameter(format!("labels must be +1/-1, got {bad}")));
    }
    if !(labels.contains(&1) && labels.contains(&-1)) {
        return Err(Error::InsufficientData("SVM training needs both classes".into()));
    }
    if !(c > 0.0) || !(gamma > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need c > 0, gamma > 0, tol > 0; got c={c}, gamma={gamma}, tol={tol}"
        )));
    }
    features.ensure_finite("SVM features")?;

    let xs = features.columns();
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    // Full kernel cache; symmetric fill.
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf_unchecked(&xs[i], &xs[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a^T Q a - e^T a.
    let mut grad = vec![-1.0; n];
    let dual = |alpha: &[f64], grad: &[f64]| -> f64 {
        -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
    };
    let mut dual_trace = vec![0.0];
    let max_iter = (100 * n).max(10_000);
    let mut converged = false;
    let mut iterations = 0;

    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(t, &alpha) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(t, &alpha) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
        dual_trace.push(dual(&alpha, &grad));
    }

    // Offset from free vectors, or the midpoint of the feasible interval.
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        0.5 * (ub + lb)
    };

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(xs[t].clone());
            alphas.push(y[t] * alpha[t]);
        }
    }
    let mut model = SvmModel {
        support_vectors,
        alphas,
        bias: -rho,
        gamma,
        platt: None,
    };
    let decisions: Vec<f64> = xs
        .iter()
        .map(|x| model.decision_value(x))
        .collect::<Result<_>>()?;
    model.platt = Some(fit_platt(&decisions, labels)?);
    Ok(SvmFit {
        model,
        dual_trace,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(points: &[[f64; 2]]) -> Matrix {
        Matrix::from_columns(points).unwrap()
    }

    #[test]
    fn two_separated_points() {
        let x = cols(&[[0.0, 0.0], [2.0, 2.0]]);
        let fit = train_svm(&x, &[-1, 1], 10.0, 0.5, 1e-6).unwrap();
        let m = &fit.model;
        let f0 = m.decision_value(&[0.0, 0.0]).unwrap();
        let f1 = m.decision_value(&[2.0, 2.0]).unwrap();
        assert!(f0 < 0.0 && f1 > 0.0);
        // Support vectors sit on the margin.
        assert!(f0.abs() >= 1.0 - 1e-6 && f1.abs() >= 1.0 - 1e-6);
    }

    #[test]
    fn xor_is_separated() {
        let x = cols(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let y = [1, 1, -1, -1];
        let fit = train_svm(&x, &y, 10.0, 1.0, 1e-6).unwrap();
        for (j, &label) in y.iter().enumerate() {
            let f = fit.model.decision_value(&x.column(j)).unwrap();
            assert_eq!(f > 0.0, label > 0, "sample {j}: {f}");
        }
        assert!(fit.converged);
    }

    #[test]
    fn dual_trace_non_decreasing_and_alpha_sum_zero() {
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.7;
                [t.sin() * (1.0 + (i % 3) as f64), t.cos()]
            })
            .collect();
        let y: Vec<i8> = (0..30).map(|i| if (i * 7) % 5 < 2 { 1 } else { -1 }).collect();
        let fit = train_svm(&cols(&pts), &y, 2.0, 0.8, 1e-4).unwrap();
        for w in fit.dual_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
        }
        let s: f64 = fit.model.alphas.iter().sum();
        assert!(s.abs() < 1e-4);
        assert!(fit.model.alphas.iter().all(|a| a.abs() > 0.0 && a.abs() <= 2.0 + 1e-12));
    }

    #[test]
    fn decision_matches_brute_force_sum() {
        let pts: Vec<[f64; 2]> = (0..12).map(|i| [i as f64 * 0.3, (i % 4) as f64]).collect();
        let y: Vec<i8> = (0..12).map(|i| if i < 6 { 1 } else { -1 }).collect();
        let fit = train_svm(&cols(&pts), &y, 1.0, 0.5, 1e-4).unwrap();
        let m = &fit.model;
        let probe = [0.7, 1.3];
        let mut s = m.bias;
        for (sv, a) in m.support_vectors.iter().zip(&m.alphas) {
            let d2 = (sv[0] - probe[0]).powi(2) + (sv[1] - probe[1]).powi(2);
            s += a * (-0.5 * d2).exp();
        }
        assert!((m.decision_value(&probe).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn duplicated_points_keep_decision_signs() {
        let pts = [[0.0, 0.0], [0.3, 0.2], [2.0, 2.1], [1.8, 2.4], [0.1, 0.5], [2.2, 1.7]];
        let y = [-1, -1, 1, 1, -1, 1];
        let once = train_svm(&cols(&pts), &y, 10.0, 0.5, 1e-6).unwrap();
        let twice_pts: Vec<[f64; 2]> = pts.iter().chain(pts.iter()).copied().collect();
        let twice_y: Vec<i8> = y.iter().chain(y.iter()).copied().collect();
        let twice = train_svm(&cols(&twice_pts), &twice_y, 10.0, 0.5, 1e-6).unwrap();
        for a in 0..=10 {
            for b in 0..=10 {
                let p = [a as f64 * 0.25, b as f64 * 0.25];
                let s1 = once.model.decision_value(&p).unwrap();
                let s2 = twice.model.decision_value(&p).unwrap();
                if s1.abs() > 1e-6 {
                    assert_eq!(s1 > 0.0, s2 > 0.0, "probe {p:?}: {s1} vs {s2}");
                }
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = cols(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(
            train_svm(&x, &[1, 1], 1.0, 1.0, 1e-3),
            Err(Error::InsufficientData(_))
        ));
        assert!(train_svm(&x, &[1, 0], 1.0, 1.0, 1e-3).is_err());
    }

    #[test]
    fn deterministic() {
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [(i as f64).sin(), (i as f64 * 1.3).cos()]).collect();
        let y: Vec<i8> = (0..20).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let a = train_svm(&cols(&pts), &y, 1.0, 1.0, 1e-4).unwrap();
        let b = train_svm(&cols(&pts), &y, 1.0, 1.0, 1e-4).unwrap();
        assert_eq!(a.model, b.model);
    }
}
