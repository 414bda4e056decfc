//! Synthetic kin videos: relatives share a latent vector that a fixed random
//! projection renders into frames.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pairs::{write_pair_list, PairRecord};
use super::pgm::write_video_dir;
use crate::error::{Error, Result};
use crate::numerics::Seed;
use crate::pipeline::VideoSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub families: usize,
    pub members_per_family: usize,
    /// Dimension of the family latent that the frames project from.
    pub latent_dim: usize,
    pub frame_dim: usize,
    pub frames_per_video: usize,
    /// Spread of each member around the family latent.
    pub kin_noise: f64,
    /// Minimum latent distance between families that form non-kin pairs.
    pub nonkin_gap: f64,
    /// Innovation scale of the per-frame AR(1) latent drift.
    pub drift: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            families: 20,
            members_per_family: 3,
            latent_dim: 2,
            frame_dim: 256,
            frames_per_video: 10,
            kin_noise: 0.15,
            nonkin_gap: 2.0,
            drift: 0.05,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.families < 2 {
            return bad(format!("need at least 2 families, got {}", self.families));
        }
        if self.members_per_family < 2 {
            return bad(format!("need at least 2 members per family, got {}", self.members_per_family));
        }
        if self.latent_dim == 0 || self.frame_dim == 0 || self.frames_per_video == 0 {
            return bad("latent_dim, frame_dim and frames_per_video must be >= 1".into());
        }
        if !(self.kin_noise >= 0.0) || !(self.drift >= 0.0) {
            return bad("kin_noise and drift must be >= 0".into());
        }
        if !(self.nonkin_gap > 0.0) {
            return bad(format!("nonkin_gap must be > 0, got {}", self.nonkin_gap));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    /// Family-major, member-minor.
    pub videos: Vec<VideoSequence>,
    pub pairs: Vec<PairRecord>,
}

impl SyntheticDataset {
    pub fn video(&self, rel: &Path) -> Option<&VideoSequence> {
        self.videos.iter().find(|v| Path::new(&v.family_id).join(&v.subject_id) == rel)
    }
}

fn gaussian(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Family groups for non-kin sampling: consecutive pairs, with a trailing
/// odd family joining the last group.
fn family_groups(n: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (0..n / 2).map(|k| vec![2 * k, 2 * k + 1]).collect();
    if n % 2 == 1 {
        groups.last_mut().expect("n >= 2").push(n - 1);
    }
    groups
}

/// Builds the dataset in memory. Frame values are quantized to 8-bit levels
/// so that writing and reloading reproduces them exactly.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let seed = Seed(cfg.seed);
    let (d, f) = (cfg.latent_dim, cfg.frame_dim);
    let mut rng = seed.derive(0).rng();
    let proj: Vec<Vec<f64>> = (0..f).map(|_| gaussian(&mut rng, d, 0.15 / (d as f64).sqrt())).collect();

    let groups = family_groups(cfg.families);
    let mut latents: Vec<Vec<f64>> = vec![Vec::new(); cfg.families];
    let mut rng = seed.derive(1).rng();
    for group in &groups {
        for (k, &fam) in group.iter().enumerate() {
            let mut tries = 0;
            latents[fam] = loop {
                let cand = gaussian(&mut rng, d, 1.0);
                if group[..k].iter().all(|&o| dist(&cand, &latents[o]) >= cfg.nonkin_gap) {
                    break cand;
                }
                tries += 1;
                if tries == 10_000 {
                    return Err(Error::InvalidParameter(format!(
                        "nonkin_gap {} is unreachable for latent_dim {d}",
                        cfg.nonkin_gap
                    )));
                }
            };
        }
    }

    let mut videos = Vec::with_capacity(cfg.families * cfg.members_per_family);
    for (fam, latent) in latents.iter().enumerate() {
        for m in 0..cfg.members_per_family {
            let mut rng = seed.derive(1000 + (fam * cfg.members_per_family + m) as u64).rng();
            let member: Vec<f64> = latent
                .iter()
                .zip(gaussian(&mut rng, d, cfg.kin_noise))
                .map(|(a, b)| a + b)
                .collect();
            let mut drift = vec![0.0; d];
            let frames = (0..cfg.frames_per_video)
                .map(|_| {
                    for (x, e) in drift.iter_mut().zip(gaussian(&mut rng, d, cfg.drift)) {
                        *x = 0.8 * *x + e;
                    }
                    let v: Vec<f64> = member.iter().zip(&drift).map(|(a, b)| a + b).collect();
                    proj.iter()
                        .map(|row| {
                            let s: f64 = row.iter().zip(&v).map(|(p, x)| p * x).sum();
                            ((0.5 + s).clamp(0.0, 1.0) * 255.0).round() / 255.0
                        })
                        .collect()
                })
                .collect();
            videos.push(VideoSequence::new(frames, format!("subj{m}"), format!("fam{fam:02}"))?);
        }
    }

    let path = |fam: usize, m: usize| Path::new(&format!("fam{fam:02}")).join(format!("subj{m}"));
    let mut rng = seed.derive(2).rng();
    let mut pairs = Vec::new();
    for group in &groups {
        let mut kin = Vec::new();
        let mut cross = Vec::new();
        for (gi, &fa) in group.iter().enumerate() {
            for i in 0..cfg.members_per_family {
                for j in i + 1..cfg.members_per_family {
                    kin.push((fa, i, fa, j));
                }
            }
            for &fb in &group[gi + 1..] {
                for i in 0..cfg.members_per_family {
                    for j in 0..cfg.members_per_family {
                        cross.push((fa, i, fb, j));
                    }
                }
            }
        }
        cross.shuffle(&mut rng);
        cross.truncate(kin.len());
        for (list, is_kin) in [(kin, true), (cross, false)] {
            for (fa, i, fb, j) in list {
                let (a, b) = (path(fa, i), path(fb, j));
                let (a, b) = if rng.random_bool(0.5) { (b, a) } else { (a, b) };
                pairs.push(PairRecord {
                    video_a: a,
                    video_b: b,
                    kin: is_kin,
                    relation: None,
                });
            }
        }
    }
    Ok(SyntheticDataset { videos, pairs })
}

/// Writes `out/famXX/subjY/frame_NNNN.pgm` for every video plus
/// `out/pairs.csv`.
pub fn write_synthetic(out: &Path, data: &SyntheticDataset) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for v in &data.videos {
        write_video_dir(&out.join(&v.family_id).join(&v.subject_id), v)?;
    }
    write_pair_list(&out.join("pairs.csv"), &data.pairs)
}

pub fn gen_synthetic_kin(cfg: &SyntheticConfig, out: &Path) -> Result<SyntheticDataset> {
    let data = generate_synthetic(cfg)?;
    write_synthetic(out, &data)?;
    Ok(data)
}
