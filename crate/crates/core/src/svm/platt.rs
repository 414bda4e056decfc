use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sigmoid calibration `P(kin | f) = 1 / (1 + exp(a f + b))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn probability(&self, decision: f64) -> f64 {
        let z = self.a * decision + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Regularized maximum-likelihood sigmoid fit (Newton with backtracking,
/// smoothed targets `(N+ + 1)/(N+ + 2)` and `1/(N- + 2)`).
pub fn fit_platt(decisions: &[f64], labels: &[i8]) -> Result<PlattParams> {
    if decisions.len() != labels.len() {
        return Err(Error::dims(
            "fit_platt",
            format!("{} decision values, {} labels", decisions.len(), labels.len()),
        ));
    }
    let prior1 = labels.iter().filter(|&&y| y > 0).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels.iter().map(|&y| if y > 0 { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    const SIGMA: f64 = 1e-12;
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&f, &ti) in decisions.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("Platt scaling".into()));
    }
    Ok(PlattParams { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_data_centres_at_half() {
        let dec: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 + i as f64 * 0.1 } else { -1.0 - (i - 20) as f64 * 0.1 }).collect();
        let mut y: Vec<i8> = (0..40).map(|i| if i < 20 { 1 } else { -1 }).collect();
        // Some overlap so the slope stays finite.
        y.swap(0, 20);
        let p = fit_platt(&dec, &y).unwrap();
        assert!((p.probability(0.0) - 0.5).abs() < 0.05);
        assert!(p.a < 0.0);
    }

    #[test]
    fn monotone_and_saturating() {
        let p = PlattParams { a: -1.3, b: 0.2 };
        let probes: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
        let probs: Vec<f64> = probes.iter().map(|&f| p.probability(f)).collect();
        assert!(probs.windows(2).all(|w| w[1] >= w[0]));
        assert!((p.probability(50.0) - 1.0).abs() < 1e-6);
        assert!(p.probability(-50.0) < 1e-6);
    }
}
