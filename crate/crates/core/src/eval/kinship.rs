use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::eer::{compute_eer, EvalResult};
use crate::data::PairRecord;
use crate::error::{Error, Result};
use crate::pipeline::{vidlet_probabilities, report_from_probs, Fusion, PipelineModel, VideoSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub video_a: PathBuf,
    pub video_b: PathBuf,
    pub kin: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub relation: Option<String>,
    /// Mean of the per-vidlet-normalized fused scores of both pair orders.
    pub score: f64,
    pub vidlets: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub fusion: Fusion,
    pub eer: f64,
    pub accuracy_pct: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub pairs: Vec<PairScore>,
    /// Accuracy per kin relation, each against all non-kin pairs. Present
    /// only when the pair list names relations.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_relation: BTreeMap<String, f64>,
    #[serde(skip)]
    pub result: Option<EvalResult>,
}

impl FusionReport {
    /// Recomputes the EER from the stored per-pair scores.
    pub fn recompute(&self) -> Result<EvalResult> {
        let scores: Vec<f64> = self.pairs.iter().map(|p| p.score).collect();
        let labels: Vec<bool> = self.pairs.iter().map(|p| p.kin).collect();
        compute_eer(&scores, &labels)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinshipReport {
    pub reports: Vec<FusionReport>,
}

impl KinshipReport {
    pub fn get(&self, fusion: Fusion) -> Option<&FusionReport> {
        self.reports.iter().find(|r| r.fusion == fusion)
    }
}

/// Per-vidlet probabilities for both orders of one pair.
fn both_orders(model: &PipelineModel, a: &VideoSequence, b: &VideoSequence) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((vidlet_probabilities(model, a, b)?, vidlet_probabilities(model, b, a)?))
}

/// Order-averaged score of one pair: each order is fused and normalized to a
/// per-vidlet scale, then the two are averaged.
pub fn symmetric_score(model: &PipelineModel, a: &VideoSequence, b: &VideoSequence, fusion: Fusion) -> Result<f64> {
    let (ab, ba) = both_orders(model, a, b)?;
    Ok(0.5 * (report_from_probs(ab, fusion).normalized_score() + report_from_probs(ba, fusion).normalized_score()))
}

/// Scores every pair under each fusion rule and computes EER reports. The
/// probabilities are computed once per pair and shared between rules.
pub fn evaluate_pairs(
    model: &PipelineModel,
    records: &[PairRecord],
    videos: &[(VideoSequence, VideoSequence)],
    fusions: &[Fusion],
) -> Result<KinshipReport> {
    if records.len() != videos.len() {
        return Err(Error::dims(
            "evaluate_pairs",
            format!("{} records, {} video pairs", records.len(), videos.len()),
        ));
    }
    let probs: Vec<(Vec<f64>, Vec<f64>)> = videos
        .iter()
        .map(|(a, b)| both_orders(model, a, b))
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    for &fusion in fusions {
        let pairs: Vec<PairScore> = records
            .iter()
            .zip(&probs)
            .map(|(r, (ab, ba))| PairScore {
                video_a: r.video_a.clone(),
                video_b: r.video_b.clone(),
                kin: r.kin,
                relation: r.relation.clone(),
                score: 0.5
                    * (report_from_probs(ab.clone(), fusion).normalized_score()
                        + report_from_probs(ba.clone(), fusion).normalized_score()),
                vidlets: ab.len(),
            })
            .collect();
        let scores: Vec<f64> = pairs.iter().map(|p| p.score).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.kin).collect();
        let result = compute_eer(&scores, &labels)?;

        let mut per_relation = BTreeMap::new();
        let relations: std::collections::BTreeSet<&str> =
            pairs.iter().filter(|p| p.kin).filter_map(|p| p.relation.as_deref()).collect();
        for rel in relations {
            let subset: Vec<&PairScore> = pairs
                .iter()
                .filter(|p| !p.kin || p.relation.as_deref() == Some(rel))
                .collect();
            let s: Vec<f64> = subset.iter().map(|p| p.score).collect();
            let l: Vec<bool> = subset.iter().map(|p| p.kin).collect();
            if let Ok(r) = compute_eer(&s, &l) {
                per_relation.insert(rel.to_string(), r.accuracy_pct);
            }
        }
        reports.push(FusionReport {
            fusion,
            eer: result.eer,
            accuracy_pct: result.accuracy_pct,
            n_pos: result.n_pos,
            n_neg: result.n_neg,
            pairs,
            per_relation,
            result: Some(result),
        });
    }
    Ok(KinshipReport { reports })
}
