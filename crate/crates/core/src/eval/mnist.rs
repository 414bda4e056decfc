use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{build_laplacian, supervision_from_classes, train_stacked, StackedSmnae, TrainConfig};
use crate::mixed_norm::ClassPartition;
use crate::numerics::Matrix;
use crate::svm::{gamma_scale, train_svm, SvmModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MnistConfig {
    /// Leading training images used.
    pub n_train: usize,
    /// Leading test images used.
    pub n_test: usize,
    pub widths: Vec<usize>,
    pub lambda: f64,
    pub beta: f64,
    pub p: f64,
    /// Initial step. The loss sums over 2000 columns, so the layer default
    /// of 0.1 overshoots and saturates the codes.
    pub eta0: f64,
    pub max_epochs: usize,
    pub rel_tol: f64,
    /// Box constraint of every one-vs-rest SVM.
    pub svm_c: f64,
    /// Multiplier of the feature-spread gamma scale.
    pub svm_gamma_multiplier: f64,
    pub svm_tol: f64,
    pub seed: u64,
}

impl Default for MnistConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 1000,
            widths: vec![256, 128],
            lambda: 1e-3,
            beta: 1e-5,
            p: 0.8,
            eta0: 1e-3,
            max_epochs: 300,
            rel_tol: 1e-6,
            svm_c: 10.0,
            svm_gamma_multiplier: 1.0,
            svm_tol: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub lambda: f64,
    pub beta: f64,
    pub test_error_pct: f64,
    pub train_error_pct: f64,
    /// Final training loss per layer.
    pub final_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnistReport {
    pub n_train: usize,
    pub n_test: usize,
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub smnae: ArmResult,
    /// Same budget with `lambda = beta = 0`.
    pub plain_autoencoder: ArmResult,
}

/// Ten one-vs-rest SVMs; prediction is the argmax of decision values.
pub struct OneVsRest {
    pub models: Vec<SvmModel>,
}

impl OneVsRest {
    pub fn train(features: &Matrix, labels: &[u8], c: f64, gamma: f64, tol: f64) -> Result<Self> {
        let models = (0..10u8)
            .map(|digit| {
                let y: Vec<i8> = labels.iter().map(|&l| if l == digit { 1 } else { -1 }).collect();
                train_svm(features, &y, c, gamma, tol).map(|fit| fit.model)
            })
            .collect::<Result<_>>()?;
        Ok(Self { models })
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        let mut best = (0u8, f64::NEG_INFINITY);
        for (k, m) in self.models.iter().enumerate() {
            let f = m.decision_value(x)?;
            if f > best.1 {
                best = (k as u8, f);
            }
        }
        Ok(best.0)
    }

    pub fn error_pct(&self, features: &Matrix, labels: &[u8]) -> Result<f64> {
        let mut wrong = 0usize;
        for (j, &l) in labels.iter().enumerate() {
            if self.predict(&features.column(j))? != l {
                wrong += 1;
            }
        }
        Ok(100.0 * wrong as f64 / labels.len() as f64)
    }
}

fn take(x: &Matrix, y: &[u8], n: usize, what: &str) -> Result<(Matrix, Vec<u8>)> {
    if n == 0 || n > x.cols() {
        return Err(Error::InsufficientData(format!(
            "{what}: requested {n} images, {} available",
            x.cols()
        )));
    }
    Ok((x.select_columns(&(0..n).collect::<Vec<_>>()), y[..n].to_vec()))
}

fn run_arm(
    xtr: &Matrix,
    ytr: &[u8],
    xte: &Matrix,
    yte: &[u8],
    cfg: &MnistConfig,
    lambda: f64,
    beta: f64,
) -> Result<ArmResult> {
    let classes: Vec<usize> = ytr.iter().map(|&l| usize::from(l)).collect();
    let part = ClassPartition::from_labels(xtr, &classes)?;
    let lap = build_laplacian(&supervision_from_classes(&classes));
    let tc = TrainConfig {
        lambda,
        beta,
        p: cfg.p,
        eta0: cfg.eta0,
        max_epochs: cfg.max_epochs,
        rel_tol: cfg.rel_tol,
        seed: cfg.seed,
    };
    let fit = train_stacked(xtr, &part, &lap, &cfg.widths, &tc)?;
    let (ftr, fte) = encode_both(&fit.stack, xtr, xte)?;
    let gamma = cfg.svm_gamma_multiplier * gamma_scale(&ftr);
    let head = OneVsRest::train(&ftr, ytr, cfg.svm_c, gamma, cfg.svm_tol)?;
    Ok(ArmResult {
        lambda,
        beta,
        test_error_pct: head.error_pct(&fte, yte)?,
        train_error_pct: head.error_pct(&ftr, ytr)?,
        final_losses: fit.traces.iter().filter_map(|t| t.final_total()).collect(),
    })
}

fn encode_both(stack: &StackedSmnae, a: &Matrix, b: &Matrix) -> Result<(Matrix, Matrix)> {
    Ok((stack.encode(a)?, stack.encode(b)?))
}

/// Trains the supervised stack and a `lambda = beta = 0` stack under the same
/// widths, epochs and seed, puts the same SVM head on each and reports both
/// test errors.
pub fn mnist_benchmark(
    train: (&Matrix, &[u8]),
    test: (&Matrix, &[u8]),
    cfg: &MnistConfig,
) -> Result<MnistReport> {
    if cfg.widths.is_empty() {
        return Err(Error::InvalidParameter("widths must be nonempty".into()));
    }
    let (xtr, ytr) = take(train.0, train.1, cfg.n_train, "training set")?;
    let (xte, yte) = take(test.0, test.1, cfg.n_test, "test set")?;
    if (0..10u8).any(|d| !ytr.contains(&d)) {
        return Err(Error::InsufficientData("the training subset lacks some digit".into()));
    }
    let smnae = run_arm(&xtr, &ytr, &xte, &yte, cfg, cfg.lambda, cfg.beta)?;
    let plain = run_arm(&xtr, &ytr, &xte, &yte, cfg, 0.0, 0.0)?;
    Ok(MnistReport {
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        widths: cfg.widths.clone(),
        epochs: cfg.max_epochs,
        smnae,
        plain_autoencoder: plain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Digit `d` lights up every tenth pixel starting at `d`, with a little
    /// deterministic jitter.
    fn prototypes(n: usize, offset: usize) -> (Matrix, Vec<u8>) {
        let labels: Vec<u8> = (0..n).map(|j| (j % 10) as u8).collect();
        let x = Matrix::from_fn(30, n, |i, j| {
            let on = if i % 10 == j % 10 { 0.8 } else { 0.1 };
            on + 0.05 * ((i * 7 + (j + offset) * 13) as f64).sin()
        });
        (x, labels)
    }

    fn tiny() -> MnistConfig {
        MnistConfig { n_train: 60, n_test: 30, widths: vec![12], max_epochs: 20, eta0: 0.01, ..Default::default() }
    }

    #[test]
    fn one_vs_rest_separates_prototypes() {
        let (x, y) = prototypes(60, 0);
        let head = OneVsRest::train(&x, &y, 10.0, 1.0, 1e-3).unwrap();
        assert_eq!(head.models.len(), 10);
        let (xt, yt) = prototypes(30, 1000);
        assert_eq!(head.error_pct(&xt, &yt).unwrap(), 0.0);
    }

    #[test]
    fn benchmark_is_deterministic_and_reports_budget() {
        let (x, y) = prototypes(60, 0);
        let (xt, yt) = prototypes(30, 1000);
        let a = mnist_benchmark((&x, &y), (&xt, &yt), &tiny()).unwrap();
        let b = mnist_benchmark((&x, &y), (&xt, &yt), &tiny()).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n_train, a.n_test, a.epochs), (60, 30, 20));
        assert!((0.0..=100.0).contains(&a.smnae.test_error_pct));
    }

    #[test]
    fn subset_requests_are_validated() {
        let (x, y) = prototypes(60, 0);
        let big = MnistConfig { n_train: 61, ..tiny() };
        assert!(mnist_benchmark((&x, &y), (&x, &y), &big).is_err());
        let (x9, y9) = prototypes(9, 0);
        let few = MnistConfig { n_train: 9, n_test: 9, ..tiny() };
        assert!(mnist_benchmark((&x9, &y9), (&x9, &y9), &few).is_err());
    }
}
