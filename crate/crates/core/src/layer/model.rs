use serde::{Deserialize, Serialize};

use super::supervision::Laplacian;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::mixed_norm::{class_penalty, ClassPartition};
use crate::numerics::{frobenius_sq, init_weights, sigmoid, Matrix, Seed};

/// Single autoencoder layer with untied weights and logistic activations.
#[derive(Clone, Debug, PartialEq)]
pub struct SmnaeLayer {
    w_enc: Matrix,
    w_dec: Matrix,
}

impl SmnaeLayer {
    pub fn new(w_enc: Matrix, w_dec: Matrix) -> Result<Self> {
        if w_dec.cols() != w_enc.rows() || w_dec.rows() != w_enc.cols() {
            return Err(Error::dims(
                "SmnaeLayer::new",
                format!(
                    "encoder {}x{} incompatible with decoder {}x{}",
                    w_enc.rows(),
                    w_enc.cols(),
                    w_dec.rows(),
                    w_dec.cols()
                ),
            ));
        }
        w_enc.ensure_finite("encoder weights")?;
        w_dec.ensure_finite("decoder weights")?;
        Ok(Self { w_enc, w_dec })
    }

    pub fn initialize(input_dim: usize, hidden: usize, seed: Seed) -> Self {
        Self {
            w_enc: init_weights(hidden, input_dim, seed),
            w_dec: init_weights(input_dim, hidden, seed.derive(0xDEC)),
        }
    }

    pub fn w_enc(&self) -> &Matrix {
        &self.w_enc
    }

    pub fn w_dec(&self) -> &Matrix {
        &self.w_dec
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_enc.rows()
    }

    /// `H = sigmoid(W X)`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.input_dim() {
            return Err(Error::dims(
                "encode",
                format!("input has {} rows, layer expects {}", x.rows(), self.input_dim()),
            ));
        }
        Ok(sigmoid(&self.w_enc.matmul(x)?))
    }

    /// `sigmoid(W' sigmoid(W X))`.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.encode(x)?;
        Ok(sigmoid(&self.w_dec.matmul(&h)?))
    }
}

pub fn encode(layer: &SmnaeLayer, x: &Matrix) -> Result<Matrix> {
    layer.encode(x)
}

/// `total = j1 + lambda * j2 + beta * j3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
}

/// Forward pass plus everything the gradient needs.
pub(crate) struct Evaluation {
    pub h: Matrix,
    pub y: Matrix,
    pub hl: Matrix,
    pub terms: LossTerms,
}

pub(crate) fn evaluate(
    layer: &SmnaeLayer,
    x: &Matrix,
    part: &ClassPartition,
    lap: &Laplacian,
    lambda: f64,
    beta: f64,
    p: f64,
) -> Result<Evaluation> {
    let h = layer.encode(x)?;
    let y = sigmoid(&layer.w_dec.matmul(&h)?);
    let j1 = frobenius_sq(&x.sub(&y)?);
    let hl = lap.right_apply(&h)?;
    let j3 = hl.dot(&h)?;
    let j2 = class_penalty(&layer.w_enc, part, p)?;
    let total = j1 + lambda * j2 + beta * j3;
    if !total.is_finite() {
        return Err(Error::NonFinite("SMNAE loss".into()));
    }
    Ok(Evaluation {
        h,
        y,
        hl,
        terms: LossTerms { total, j1, j2, j3 },
    })
}

fn check_batch(layer: &SmnaeLayer, x: &Matrix, part: &ClassPartition, lap: &Laplacian) -> Result<()> {
    if x.rows() != layer.input_dim() {
        return Err(Error::dims(
            "loss_smnae",
            format!("X has {} rows, layer expects {}", x.rows(), layer.input_dim()),
        ));
    }
    if x.cols() != lap.len() {
        return Err(Error::dims(
            "loss_smnae",
            format!("X has {} columns, Laplacian is {n}x{n}", x.cols(), n = lap.len()),
        ));
    }
    if part.num_samples() != x.cols() || part.feature_dim() != x.rows() {
        return Err(Error::dims(
            "loss_smnae",
            format!(
                "partition covers {}x{}, batch is {}x{}",
                part.feature_dim(),
                part.num_samples(),
                x.rows(),
                x.cols()
            ),
        ));
    }
    x.ensure_finite("input batch")
}

pub fn loss_smnae(
    layer: &SmnaeLayer,
    x: &Matrix,
    part: &ClassPartition,
    lap: &Laplacian,
    cfg: &TrainConfig,
) -> Result<LossTerms> {
    check_batch(layer, x, part, lap)?;
    Ok(evaluate(layer, x, part, lap, cfg.lambda, cfg.beta, cfg.p)?.terms)
}

pub(crate) fn gradients_from(layer: &SmnaeLayer, x: &Matrix, ev: &Evaluation, beta: f64) -> Result<(Matrix, Matrix)> {
    // d/dY of ||X - Y||^2 through the decoder sigmoid.
    let mut delta_out = ev.y.sub(x)?;
    for (d, &y) in delta_out.as_mut_slice().iter_mut().zip(ev.y.as_slice()) {
        *d *= 2.0 * y * (1.0 - y);
    }
    let g_dec = delta_out.matmul_nt(&ev.h)?;
    let mut dh = layer.w_dec.matmul_tn(&delta_out)?;
    if beta != 0.0 {
        // L is symmetric: d/dH trace(H L H^T) = 2 H L.
        dh = dh.add_scaled(2.0 * beta, &ev.hl)?;
    }
    for (d, &h) in dh.as_mut_slice().iter_mut().zip(ev.h.as_slice()) {
        *d *= h * (1.0 - h);
    }
    let g_enc = dh.matmul_nt(x)?;
    Ok((g_enc, g_dec))
}

/// Gradients of `J1 + beta * J3` with respect to the encoder and decoder
/// weights.
pub fn grad_smooth(layer: &SmnaeLayer, x: &Matrix, lap: &Laplacian, beta: f64) -> Result<(Matrix, Matrix)> {
    if x.rows() != layer.input_dim() || x.cols() != lap.len() {
        return Err(Error::dims(
            "grad_smooth",
            format!(
                "X is {}x{}, expected {} rows and {} columns",
                x.rows(),
                x.cols(),
                layer.input_dim(),
                lap.len()
            ),
        ));
    }
    let h = layer.encode(x)?;
    let y = sigmoid(&layer.w_dec.matmul(&h)?);
    let hl = lap.right_apply(&h)?;
    let ev = Evaluation {
        h,
        y,
        hl,
        terms: LossTerms {
            total: 0.0,
            j1: 0.0,
            j2: 0.0,
            j3: 0.0,
        },
    };
    gradients_from(layer, x, &ev, beta)
}

/// Greedily trained stack; layer `k` consumes the encoding of layer `k - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedSmnae {
    layers: Vec<SmnaeLayer>,
}

impl StackedSmnae {
    pub fn new(layers: Vec<SmnaeLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("stack needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].hidden_dim() {
                return Err(Error::dims(
                    "StackedSmnae::new",
                    format!(
                        "layer {} expects {} inputs, layer {k} produces {}",
                        k + 1,
                        pair[1].input_dim(),
                        pair[0].hidden_dim()
                    ),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[SmnaeLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, SmnaeLayer::hidden_dim)
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = self.layers[0].encode(x)?;
        for layer in &self.layers[1..] {
            h = layer.encode(&h)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::supervision::{build_laplacian, discrimination_term, supervision_from_classes};
    use crate::numerics::sigmoid_scalar;
    use proptest::prelude::*;

    fn setup(seed: u64, d: usize, n: usize, hidden: usize) -> (SmnaeLayer, Matrix, ClassPartition, Laplacian) {
        let layer = SmnaeLayer::initialize(d, hidden, Seed(seed));
        let x = init_weights(d, n, Seed(seed + 100)).map(|v| 0.5 + v * 0.4);
        let classes: Vec<usize> = (0..n).map(|j| j % 2).collect();
        let part = ClassPartition::from_labels(&x, &classes).unwrap();
        let lap = build_laplacian(&supervision_from_classes(&classes));
        (layer, x, part, lap)
    }

    #[test]
    fn encode_examples() {
        let layer = SmnaeLayer::new(Matrix::zeros(3, 4), Matrix::zeros(4, 3)).unwrap();
        let x = init_weights(4, 1, Seed(1));
        let h = layer.encode(&x).unwrap();
        assert_eq!(h.shape(), (3, 1));
        assert!(h.as_slice().iter().all(|&v| v == 0.5));

        let layer = SmnaeLayer::initialize(4, 3, Seed(2));
        let x = init_weights(4, 5, Seed(3));
        let h = layer.encode(&x).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let mut z = 0.0;
                for k in 0..4 {
                    z += layer.w_enc().get(i, k) * x.get(k, j);
                }
                assert!((h.get(i, j) - sigmoid_scalar(z)).abs() < 1e-12);
            }
        }
        assert!(layer.encode(&Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn loss_reductions() {
        let (layer, x, part, lap) = setup(1, 5, 6, 3);
        let cfg = TrainConfig {
            lambda: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        let t = loss_smnae(&layer, &x, &part, &lap, &cfg).unwrap();
        assert_eq!(t.total, t.j1);

        let zero = SmnaeLayer::new(Matrix::zeros(3, 5), Matrix::zeros(5, 3)).unwrap();
        let half = Matrix::filled(5, 6, 0.5);
        let part = ClassPartition::from_labels(&half, &[0, 1, 0, 1, 0, 1]).unwrap();
        let t = loss_smnae(&zero, &half, &part, &lap, &TrainConfig::default()).unwrap();
        assert_eq!(t.j1, 0.0);
    }

    #[test]
    fn loss_matches_term_by_term_oracle() {
        let (layer, x, part, lap) = setup(4, 6, 8, 4);
        let cfg = TrainConfig {
            lambda: 0.3,
            beta: 0.7,
            p: 0.6,
            ..Default::default()
        };
        let t = loss_smnae(&layer, &x, &part, &lap, &cfg).unwrap();

        // Independent scalar-loop evaluation.
        let (h_dim, d, n) = (4, 6, 8);
        let mut h = vec![vec![0.0; n]; h_dim];
        for i in 0..h_dim {
            for j in 0..n {
                let z: f64 = (0..d).map(|k| layer.w_enc().get(i, k) * x.get(k, j)).sum();
                h[i][j] = 1.0 / (1.0 + (-z).exp());
            }
        }
        let mut j1 = 0.0;
        for r in 0..d {
            for j in 0..n {
                let z: f64 = (0..h_dim).map(|i| layer.w_dec().get(r, i) * h[i][j]).sum();
                let y = 1.0 / (1.0 + (-z).exp());
                j1 += (x.get(r, j) - y).powi(2);
            }
        }
        let mut j2 = 0.0;
        for c in 0..2 {
            let mut s = 0.0;
            for i in 0..h_dim {
                let mut sq = 0.0;
                for j in (c..n).step_by(2) {
                    let v: f64 = (0..d).map(|k| layer.w_enc().get(i, k) * x.get(k, j)).sum();
                    sq += v * v;
                }
                s += sq.sqrt().powf(0.6);
            }
            j2 += s.powf(1.0 / 0.6);
        }
        let mut j3 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let hab: f64 = (0..h_dim).map(|i| h[i][a] * h[i][b]).sum();
                j3 += hab * lap.matrix().get(b, a);
            }
        }
        assert!((t.j1 - j1).abs() < 1e-10);
        assert!((t.j2 - j2).abs() < 1e-10);
        assert!((t.j3 - j3).abs() < 1e-10);
        assert!((t.total - (j1 + 0.3 * j2 + 0.7 * j3)).abs() < 1e-10);
    }

    fn smooth_objective(layer: &SmnaeLayer, x: &Matrix, lap: &Laplacian, beta: f64) -> f64 {
        let h = layer.encode(x).unwrap();
        let y = sigmoid(&layer.w_dec().matmul(&h).unwrap());
        frobenius_sq(&x.sub(&y).unwrap()) + beta * discrimination_term(&h, lap).unwrap()
    }

    pub(crate) fn max_fd_error(layer: &SmnaeLayer, x: &Matrix, lap: &Laplacian, beta: f64) -> f64 {
        let (ge, gd) = grad_smooth(layer, x, lap, beta).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        let scale = ge.max_abs().max(gd.max_abs()).max(1e-8);
        for which in 0..2 {
            let (rows, cols) = if which == 0 { ge.shape() } else { gd.shape() };
            for r in 0..rows {
                for c in 0..cols {
                    let perturb = |delta: f64| {
                        let (mut e, mut d) = (layer.w_enc().clone(), layer.w_dec().clone());
                        let m = if which == 0 { &mut e } else { &mut d };
                        m.set(r, c, m.get(r, c) + delta);
                        smooth_objective(&SmnaeLayer::new(e, d).unwrap(), x, lap, beta)
                    };
                    let fd = (perturb(step) - perturb(-step)) / (2.0 * step);
                    let an = if which == 0 { ge.get(r, c) } else { gd.get(r, c) };
                    worst = worst.max((fd - an).abs() / scale);
                }
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (layer, x, _, lap) = setup(7, 6, 8, 5);
        assert!(max_fd_error(&layer, &x, &lap, 0.0) <= 1e-5);
        assert!(max_fd_error(&layer, &x, &lap, 0.5) <= 1e-5);
    }

    #[test]
    fn zero_residual_kills_decoder_gradient() {
        // Decoder output is 0.5 everywhere when W' = 0; X = 0.5 reconstructs exactly.
        let layer = SmnaeLayer::new(init_weights(3, 4, Seed(1)), Matrix::zeros(4, 3)).unwrap();
        let x = Matrix::filled(4, 5, 0.5);
        let lap = build_laplacian(&supervision_from_classes(&[0, 0, 1, 1, 0]));
        let (_, gd) = grad_smooth(&layer, &x, &lap, 0.0).unwrap();
        assert!(gd.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_linear_in_beta() {
        let (layer, x, _, lap) = setup(3, 5, 6, 3);
        let (g0, _) = grad_smooth(&layer, &x, &lap, 0.0).unwrap();
        let (g1, _) = grad_smooth(&layer, &x, &lap, 0.4).unwrap();
        let (g2, _) = grad_smooth(&layer, &x, &lap, 0.8).unwrap();
        let d1 = g1.sub(&g0).unwrap();
        let d2 = g2.sub(&g0).unwrap();
        for (a, b) in d1.as_slice().iter().zip(d2.as_slice()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stack_checks_dimensions() {
        let a = SmnaeLayer::initialize(6, 4, Seed(1));
        let b = SmnaeLayer::initialize(4, 2, Seed(2));
        let s = StackedSmnae::new(vec![a.clone(), b]).unwrap();
        assert_eq!(s.output_dim(), 2);
        assert_eq!(s.encode(&Matrix::zeros(6, 3)).unwrap().shape(), (2, 3));
        assert!(StackedSmnae::new(vec![a.clone(), a]).is_err());
    }

    proptest! {
        #[test]
        fn encode_commutes_with_column_permutation(seed in 0u64..200, perm_seed in 0u64..200) {
            let layer = SmnaeLayer::initialize(4, 3, Seed(seed));
            let x = init_weights(4, 6, Seed(seed + 1));
            let mut idx: Vec<usize> = (0..6).collect();
            let mut rng = Seed(perm_seed).rng();
            use rand::seq::SliceRandom;
            idx.shuffle(&mut rng);
            let left = layer.encode(&x.select_columns(&idx)).unwrap();
            let right = layer.encode(&x).unwrap().select_columns(&idx);
            prop_assert_eq!(left, right);
        }
    }
}
