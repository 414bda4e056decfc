use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One operating point: scores `>= threshold` are accepted as kin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub far: f64,
    pub frr: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub eer: f64,
    pub accuracy_pct: f64,
    pub roc: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::dims(
            "compute_eer",
            format!("{} scores, {} labels", scores.len(), labels.len()),
        ));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientData(
            "EER needs both kin and non-kin scores".into(),
        ));
    }
    Ok((n_pos, n_neg))
}

/// One point per distinct score in ascending order, followed by a point at
/// `f64::MAX` that rejects everything (`far = 0`, `frr = 1`) unless a score
/// equals `f64::MAX`.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut order: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sweep upward: everything strictly below the threshold is rejected.
    let (mut pos_below, mut neg_below) = (0usize, 0usize);
    let mut out = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = order[i].0;
        out.push(RocPoint {
            far: (n_neg - neg_below) as f64 / n_neg as f64,
            frr: pos_below as f64 / n_pos as f64,
            threshold: t,
        });
        while i < order.len() && order[i].0 == t {
            if order[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
    }
    if out.last().is_some_and(|p| p.threshold < f64::MAX) {
        out.push(RocPoint {
            far: 0.0,
            frr: 1.0,
            threshold: f64::MAX,
        });
    }
    Ok(out)
}

/// Linear interpolation between the two operating points that bracket the
/// sign change of `far - frr`.
pub(crate) fn eer_from_roc(roc: &[RocPoint]) -> f64 {
    let diff = |p: &RocPoint| p.far - p.frr;
    for k in 0..roc.len() {
        let d = diff(&roc[k]);
        if d == 0.0 {
            return roc[k].far;
        }
        if d < 0.0 {
            if k == 0 {
                return roc[0].far.min(roc[0].frr);
            }
            let (p, q) = (&roc[k - 1], &roc[k]);
            let s = diff(p) / (diff(p) - d);
            return p.far + s * (q.far - p.far);
        }
    }
    // Unreachable for a sweep that ends at far = 0, frr = 1.
    roc.last().map_or(0.5, |p| p.far)
}

pub fn compute_eer(scores: &[f64], labels: &[bool]) -> Result<EvalResult> {
    let roc = roc_points(scores, labels)?;
    let (n_pos, n_neg) = check(scores, labels)?;
    let eer = eer_from_roc(&roc);
    Ok(EvalResult {
        eer,
        accuracy_pct: 100.0 * (1.0 - eer),
        roc,
        n_pos,
        n_neg,
    })
}

/// `far,frr,threshold` rows for plotting.
pub fn roc_csv(roc: &[RocPoint]) -> String {
    let mut s = String::from("far,frr,threshold\n");
    for p in roc {
        s.push_str(&format!("{},{},{}\n", p.far, p.frr, p.threshold));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Counting oracle: every candidate threshold is scored by a full pass.
    fn brute_roc(scores: &[f64], labels: &[bool]) -> Vec<RocPoint> {
        let mut ts: Vec<f64> = scores.to_vec();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts.push(f64::MAX);
        let n_pos = labels.iter().filter(|&&l| l).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        ts.into_iter()
            .map(|t| {
                let mut fa = 0.0;
                let mut fr = 0.0;
                for (s, &l) in scores.iter().zip(labels) {
                    if !l && *s >= t {
                        fa += 1.0;
                    }
                    if l && *s < t {
                        fr += 1.0;
                    }
                }
                RocPoint { far: fa / n_neg, frr: fr / n_pos, threshold: t }
            })
            .collect()
    }

    fn brute_eer(scores: &[f64], labels: &[bool]) -> f64 {
        let roc = brute_roc(scores, labels);
        for w in roc.windows(2) {
            let (d0, d1) = (w[0].far - w[0].frr, w[1].far - w[1].frr);
            if d0 == 0.0 {
                return w[0].far;
            }
            if d0 > 0.0 && d1 <= 0.0 {
                if d1 == 0.0 {
                    return w[1].far;
                }
                return w[0].far + d0 / (d0 - d1) * (w[1].far - w[0].far);
            }
        }
        unreachable!("sweep always crosses")
    }

    #[test]
    fn separated_scores() {
        let r = compute_eer(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.eer, 0.0);
        assert_eq!(r.accuracy_pct, 100.0);
    }

    #[test]
    fn identical_scores_give_half() {
        let labels = [true, false, false, true, true, false, true];
        let r = compute_eer(&[0.3; 7], &labels).unwrap();
        assert_eq!(r.eer, 0.5);
    }

    #[test]
    fn one_swap_crossing() {
        let r = compute_eer(&[0.9, 0.8, 0.4, 0.1], &[true, false, true, false]).unwrap();
        assert_eq!(r.eer, 0.5);
    }

    #[test]
    fn roc_endpoints() {
        let roc = roc_points(&[0.2, 0.5, 0.7], &[true, false, true]).unwrap();
        let first = roc.first().unwrap();
        assert_eq!((first.far, first.frr), (1.0, 0.0));
        let last = roc.last().unwrap();
        assert_eq!((last.far, last.frr), (0.0, 1.0));
        assert!(roc.windows(2).all(|w| w[0].threshold < w[1].threshold && w[0].far >= w[1].far));
    }

    #[test]
    fn single_class_rejected() {
        assert!(compute_eer(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_points(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn twenty_scores_match_counting_oracle() {
        let mut rng = Seed(20).rng();
        let scores: Vec<f64> = (0..20).map(|_| (rng.random_range(0.0..1.0) * 8.0f64).round() / 8.0).collect();
        let labels: Vec<bool> = (0..20).map(|i| i % 3 != 0).collect();
        assert_eq!(roc_points(&scores, &labels).unwrap(), brute_roc(&scores, &labels));
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            data in prop::collection::vec((0u8..30, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 7.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let r = compute_eer(&scores, &labels).unwrap();
            prop_assert_eq!(r.eer, brute_eer(&scores, &labels));
            prop_assert_eq!(r.accuracy_pct, 100.0 * (1.0 - r.eer));
            prop_assert!((0.0..=1.0).contains(&r.eer));
        }

        #[test]
        fn invariant_under_increasing_transform(
            data in prop::collection::vec((0u8..40, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 10.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(compute_eer(&scores, &labels).unwrap().eer, compute_eer(&warped, &labels).unwrap().eer);
        }
    }
}
