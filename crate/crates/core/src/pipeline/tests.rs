use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::data::{generate_synthetic, SyntheticConfig};
use crate::layer::{SmnaeLayer, StackedSmnae};
use crate::numerics::Seed;
use crate::svm::{PlattParams, SvmModel};

fn random_stack(dims: &[usize], seed: Seed) -> StackedSmnae {
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| SmnaeLayer::initialize(w[0], w[1], seed.derive(k as u64)))
        .collect();
    StackedSmnae::new(layers).unwrap()
}

fn random_model(frame_dim: usize, z: usize, seed: u64) -> PipelineModel {
    let s = Seed(seed);
    let s1 = random_stack(&[2 * frame_dim, 6, 4], s.derive(1));
    let s2 = random_stack(&[8, 5], s.derive(2));
    let s3 = random_stack(&[2 * z * 5, 3], s.derive(3));
    let mut rng = s.derive(4).rng();
    let support_vectors: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let alphas = vec![0.8, -0.5, 0.3, -0.9, 0.3];
    let svm = SvmModel {
        support_vectors,
        alphas,
        bias: 0.05,
        gamma: 2.0,
        platt: Some(PlattParams { a: -3.0, b: 0.1 }),
    };
    PipelineModel::new(s1, s2, s3, svm, z, Fusion::Sum).unwrap()
}

fn random_video(n: usize, dim: usize, seed: u64) -> VideoSequence {
    let mut rng = Seed(seed).rng();
    let frames = (0..n).map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    VideoSequence::new(frames, format!("s{seed}"), "f").unwrap()
}

#[test]
fn fusion_examples() {
    let r = report_from_probs(vec![1.0; 4], Fusion::Sum);
    assert_eq!(r.fused_score, 4.0);
    assert!(r.kin);
    let probs = vec![0.9, 0.2, 0.7];
    let r = report_from_probs(probs.clone(), Fusion::Max);
    assert_eq!((r.fused_score, r.threshold, r.kin), (0.9, 0.5, true));
    let r = report_from_probs(probs, Fusion::Sum);
    assert!((r.fused_score - 1.8).abs() < 1e-15);
    assert_eq!(r.threshold, 1.5);
    assert!(r.kin);
    assert!((r.normalized_score() - 0.6).abs() < 1e-15);
    assert_eq!("max".parse::<Fusion>().unwrap(), Fusion::Max);
    assert!("mean".parse::<Fusion>().is_err());
}

#[test]
fn sum_fusion_decomposes_over_vidlet_pairs() {
    let m = random_model(6, 1, 3);
    let (a, b) = (random_video(9, 6, 1), random_video(6, 6, 2));
    let report = score_video_pair(&m, &a, &b).unwrap();
    let (a2, b2) = cycle_align(&a, &b);
    let (va, vb) = (extract_vidlets(&a2, 1).unwrap(), extract_vidlets(&b2, 1).unwrap());
    assert_eq!(va.len(), 3);
    let mut total = 0.0;
    for (x, y) in va.iter().zip(&vb) {
        let h1 = m.stage1.encode(&stage1_input(x, y).unwrap()).unwrap();
        let h2 = m.stage2.encode(&stage2_input(&h1, 1).unwrap()).unwrap();
        let f = m.stage3.encode(&stage3_input(&h2, 1).unwrap()).unwrap();
        total += m.classifier.predict_proba(&f.column(0)).unwrap();
    }
    assert!((report.fused_score - total).abs() < 1e-12);
    assert_eq!(report.per_vidlet_probs.len(), 3);
}

#[test]
fn pair_order_matters() {
    let m = random_model(6, 1, 5);
    let (a, b) = (random_video(6, 6, 11), random_video(6, 6, 12));
    let ab = score_video_pair(&m, &a, &b).unwrap().fused_score;
    let ba = score_video_pair(&m, &b, &a).unwrap().fused_score;
    assert_ne!(ab, ba);
}

#[test]
fn frame_dim_mismatch_is_reported() {
    let m = random_model(6, 1, 3);
    let (a, b) = (random_video(6, 5, 1), random_video(6, 5, 2));
    assert!(score_video_pair(&m, &a, &b).is_err());
}

#[test]
fn model_dimension_chain_is_checked() {
    let m = random_model(6, 1, 3);
    let bad = PipelineModel::new(m.stage1.clone(), m.stage2.clone(), m.stage3.clone(), m.classifier.clone(), 2, Fusion::Sum);
    assert!(bad.is_err());
}

#[test]
fn codec_round_trip_is_bit_exact() {
    let m = random_model(6, 1, 9);
    let bytes = m.to_bytes();
    assert_eq!(&bytes[..6], b"SMNAE1");
    let back = PipelineModel::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_bytes(), bytes);
    let (a, b) = (random_video(7, 6, 1), random_video(7, 6, 2));
    let s1 = score_video_pair(&m, &a, &b).unwrap();
    let s2 = score_video_pair(&back, &a, &b).unwrap();
    assert_eq!(s1.fused_score.to_bits(), s2.fused_score.to_bits());
}

#[test]
fn codec_rejects_damage() {
    let bytes = random_model(6, 1, 9).to_bytes();
    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    assert!(PipelineModel::from_bytes(&flipped).unwrap_err().to_string().contains("checksum"));
    assert!(PipelineModel::from_bytes(&bytes[..bytes.len() - 9]).is_err());
    assert!(PipelineModel::from_bytes(b"NOTAMODEL").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn forward_shapes_hold(n in 3usize..14, m in 3usize..14, seed in 0u64..1000) {
        let model = random_model(4, 1, seed);
        let (a, b) = (random_video(n, 4, seed + 1), random_video(m, 4, seed + 2));
        let f = vidlet_features(&model, &a, &b).unwrap();
        prop_assert_eq!(f.shape(), (model.stage3.output_dim(), n.max(m) / 3));
        let r = score_video_pair(&model, &a, &b).unwrap();
        prop_assert!(r.per_vidlet_probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        z: 1,
        scale: 1,
        ..Default::default()
    };
    cfg.stage1.widths = Some(vec![12, 8]);
    cfg.stage2.widths = Some(vec![8]);
    cfg.stage3.widths = Some(vec![6]);
    for s in [&mut cfg.stage1, &mut cfg.stage2, &mut cfg.stage3] {
        s.max_epochs = 40;
    }
    cfg
}

fn small_pairs(kin_noise: f64) -> Vec<(VideoSequence, VideoSequence, bool)> {
    let data = generate_synthetic(&SyntheticConfig {
        families: 4,
        frame_dim: 16,
        frames_per_video: 6,
        kin_noise,
        drift: 0.0,
        ..Default::default()
    })
    .unwrap();
    data.pairs
        .iter()
        .map(|p| (data.video(&p.video_a).unwrap().clone(), data.video(&p.video_b).unwrap().clone(), p.kin))
        .collect()
}

#[test]
fn identical_latent_families_are_fit() {
    let fit = train_pipeline(&small_pairs(0.0), &small_config()).unwrap();
    assert!(fit.svm_train_accuracy >= 0.95, "{}", fit.svm_train_accuracy);
}

#[test]
fn training_is_deterministic() {
    let pairs = small_pairs(0.1);
    let a = train_pipeline(&pairs, &small_config()).unwrap();
    let b = train_pipeline(&pairs, &small_config()).unwrap();
    assert_eq!(a.model.to_bytes(), b.model.to_bytes());
}

#[test]
fn training_needs_both_labels() {
    let pairs: Vec<_> = small_pairs(0.1).into_iter().filter(|p| p.2).collect();
    assert!(train_pipeline(&pairs, &small_config()).is_err());
}

#[test]
fn desk_scale_widths_train_end_to_end() {
    let data = generate_synthetic(&SyntheticConfig {
        families: 2,
        frames_per_video: 5,
        ..Default::default()
    })
    .unwrap();
    let pairs: Vec<_> = data
        .pairs
        .iter()
        .map(|p| (data.video(&p.video_a).unwrap().clone(), data.video(&p.video_b).unwrap().clone(), p.kin))
        .collect();
    let mut cfg = PipelineConfig::default();
    cfg.svm.grid_search = false;
    for s in [&mut cfg.stage1, &mut cfg.stage2, &mut cfg.stage3] {
        s.max_epochs = 3;
    }
    let fit = train_pipeline(&pairs, &cfg).unwrap();
    let m = &fit.model;
    assert_eq!(m.frame_dim(), 256);
    assert_eq!(m.stage1.output_dim(), 32);
    assert_eq!((m.stage2.input_dim(), m.stage2.output_dim()), (64, 16));
    assert_eq!((m.stage3.input_dim(), m.stage3.output_dim()), (64, 32));
}

#[test]
fn config_json_rejects_unknown_keys() {
    let cfg: PipelineConfig = serde_json::from_str(r#"{"z": 3, "stage1": {"lambda": 0.5}}"#).unwrap();
    assert_eq!(cfg.z, 3);
    assert_eq!(cfg.stage1.lambda, 0.5);
    assert_eq!(cfg.scaled_widths(0), vec![128, 64, 32]);
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"zz": 3}"#).is_err());
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"stage2": {"width": [3]}}"#).is_err());
}
