//! The row-group `l2,p` norm, the class-wise penalty `sum_c ||W X_c||_{2,p}`
//! and its proximal operator.
//!
//! The proximal problem
//!
//! ```text
//! F(W) = 1/(2 eta) ||W - A||_F^2 + lambda * sum_c ( sum_i ||w^i X_c||^p )^(1/p)
//! ```
//!
//! is solved by majorize-minimize. The outer power mean is concave in the
//! group norms for `p <= 1`, so linearizing it at the current iterate gives a
//! weighted sum of group norms that upper-bounds the penalty. Two routes then
//! minimize that surrogate:
//!
//! * single class with a well-conditioned Gram matrix `X X^T`: rotate into its
//!   eigenbasis and solve each row exactly with a safeguarded Newton iteration
//!   on a scalar secular equation;
//! * otherwise: bound each group norm by a quadratic and minimize the result
//!   with a batched conjugate-gradient solve warm-started at the iterate.
//!
//! Every accepted iterate lowers `F`, and the objective trace is returned.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, Matrix};

/// Group norms below this are treated as exactly zero.
pub const ZERO_GROUP: f64 = 1e-12;

/// Minimum `lambda_min / lambda_max` of `X X^T` for the eigenbasis route.
const EIGEN_ROUTE_MIN_RCOND: f64 = 1e-10;

/// Column batches of `X`, one per class.
#[derive(Clone, Debug)]
pub struct ClassPartition {
    batches: Vec<Matrix>,
    membership: Vec<Vec<usize>>,
}

impl ClassPartition {
    /// Partition from explicit class batches. The full batch is taken to be
    /// `[X_1 | X_2 | ... | X_C]`.
    pub fn new(batches: Vec<Matrix>) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::InvalidParameter(
                "class partition needs at least one class".into(),
            ));
        }
        let d = batches[0].rows();
        if let Some(b) = batches.iter().find(|b| b.rows() != d) {
            return Err(Error::dims(
                "ClassPartition::new",
                format!("class batch has {} rows, expected {d}", b.rows()),
            ));
        }
        let mut membership = Vec::with_capacity(batches.len());
        let mut next = 0;
        for b in &batches {
            membership.push((next..next + b.cols()).collect());
            next += b.cols();
        }
        Ok(Self {
            batches,
            membership,
        })
    }

    /// Groups the columns of `x` by label. Classes are ordered by ascending
    /// label value; labels with no columns produce no class.
    pub fn from_labels(x: &Matrix, labels: &[usize]) -> Result<Self> {
        if labels.len() != x.cols() {
            return Err(Error::dims(
                "ClassPartition::from_labels",
                format!("{} labels for {} columns", labels.len(), x.cols()),
            ));
        }
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let membership: Vec<Vec<usize>> = distinct
            .iter()
            .map(|&c| {
                labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == c)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        Self::with_membership(x, membership)
    }

    fn with_membership(x: &Matrix, membership: Vec<Vec<usize>>) -> Result<Self> {
        if membership.is_empty() {
            return Err(Error::InvalidParameter(
                "class partition needs at least one class".into(),
            ));
        }
        let batches = membership.iter().map(|idx| x.select_columns(idx)).collect();
        Ok(Self {
            batches,
            membership,
        })
    }

    /// Same class membership applied to a new batch with the same column
    /// layout (e.g. the encoding of the original batch).
    pub fn regroup(&self, x: &Matrix) -> Result<Self> {
        if x.cols() != self.num_samples() {
            return Err(Error::dims(
                "ClassPartition::regroup",
                format!("{} columns, partition covers {}", x.cols(), self.num_samples()),
            ));
        }
        Self::with_membership(x, self.membership.clone())
    }

    pub fn batches(&self) -> &[Matrix] {
        &self.batches
    }

    /// Column indices (into the full batch) of each class.
    pub fn membership(&self) -> &[Vec<usize>] {
        &self.membership
    }

    pub fn num_classes(&self) -> usize {
        self.batches.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.batches[0].rows()
    }

    pub fn num_samples(&self) -> usize {
        self.batches.iter().map(Matrix::cols).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxConfig {
    pub lambda: f64,
    pub eta: f64,
    pub p: f64,
    pub tol: f64,
    pub max_inner_iters: usize,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            eta: 0.1,
            p: 0.8,
            tol: 1e-8,
            max_inner_iters: 100,
        }
    }
}

impl ProxConfig {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eta must be finite and > 0, got {}",
                self.eta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {p}")))
    }
}

/// Euclidean norm of every row.
pub fn row_group_norms(w: &Matrix) -> Vec<f64> {
    (0..w.rows())
        .map(|r| w.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

fn power_mean(norms: impl Iterator<Item = f64>, p: f64) -> f64 {
    let s: f64 = norms.map(|n| if n > 0.0 { n.powf(p) } else { 0.0 }).sum();
    if s == 0.0 {
        0.0
    } else {
        s.powf(1.0 / p)
    }
}

/// `(sum_i ||w^i||^p)^(1/p)`.
pub fn l2p_norm(w: &Matrix, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(power_mean(row_group_norms(w).into_iter(), p))
}

/// `sum_c l2p_norm(W X_c, p)`.
pub fn class_penalty(w: &Matrix, part: &ClassPartition, p: f64) -> Result<f64> {
    check_p(p)?;
    if w.cols() != part.feature_dim() {
        return Err(Error::dims(
            "class_penalty",
            format!(
                "W has {} columns, class batches have {} features",
                w.cols(),
                part.feature_dim()
            ),
        ));
    }
    let mut total = 0.0;
    for xc in part.batches() {
        total += l2p_norm(&w.matmul(xc)?, p)?;
    }
    Ok(total)
}

/// Row-wise shrinkage `a^i * max(0, 1 - tau / ||a^i||)`.
pub fn block_soft_threshold(a: &Matrix, tau: f64) -> Matrix {
    let mut out = a.clone();
    for (r, n) in row_group_norms(a).into_iter().enumerate() {
        let k = if n > 0.0 { (1.0 - tau / n).max(0.0) } else { 0.0 };
        out.row_mut(r).iter_mut().for_each(|v| *v *= k);
    }
    out
}

/// `F(W) = 1/(2 eta) ||W - A||^2 + lambda * class_penalty(W)`.
pub fn prox_objective(w: &Matrix, a: &Matrix, part: &ClassPartition, cfg: &ProxConfig) -> Result<f64> {
    let fit = frobenius_sq(&w.sub(a)?) / (2.0 * cfg.eta);
    Ok(fit + cfg.lambda * class_penalty(w, part, cfg.p)?)
}

#[derive(Clone, Debug)]
pub struct ProxOutcome {
    pub w: Matrix,
    /// Relative stationarity residual `eta * ||grad F|| / ||A||` at `w`,
    /// taken over rows whose groups are all nonzero.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after initialization and after every accepted iterate.
    pub objective_trace: Vec<f64>,
}

/// Solves the proximal problem at `a` for the given class partition.
pub fn prox_l2p(a: &Matrix, part: &ClassPartition, cfg: &ProxConfig) -> Result<ProxOutcome> {
    ProxSolver::new(part)?.solve(a, cfg)
}

/// Reusable solver; caches the factorizations that depend only on the
/// class partition.
#[derive(Clone, Debug)]
pub struct ProxSolver {
    feature_dim: usize,
    route: Route,
}

#[derive(Clone, Debug)]
enum Route {
    /// `X X^T = Q diag(evals) Q^T`, all eigenvalues positive.
    Eigen { q: Matrix, evals: Vec<f64> },
    Reweighted {
        x_all: Matrix,
        class_of_col: Vec<usize>,
        n_classes: usize,
    },
}

impl ProxSolver {
    pub fn new(part: &ClassPartition) -> Result<Self> {
        let d = part.feature_dim();
        if part.num_classes() == 1 {
            let x = &part.batches()[0];
            x.ensure_finite("class batch")?;
            if x.cols() >= d {
                let g = x.matmul_nt(x)?;
                let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, g.as_slice()));
                let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
                let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                if max > 0.0 && min >= EIGEN_ROUTE_MIN_RCOND * max {
                    let q = Matrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, c)]);
                    return Ok(Self {
                        feature_dim: d,
                        route: Route::Eigen {
                            q,
                            evals: eig.eigenvalues.iter().cloned().collect(),
                        },
                    });
                }
            }
        }
        let parts: Vec<&Matrix> = part.batches().iter().collect();
        let x_all = Matrix::hcat(&parts)?;
        x_all.ensure_finite("class batch")?;
        let class_of_col = part
            .batches()
            .iter()
            .enumerate()
            .flat_map(|(c, b)| std::iter::repeat_n(c, b.cols()))
            .collect();
        Ok(Self {
            feature_dim: d,
            route: Route::Reweighted {
                x_all,
                class_of_col,
                n_classes: part.num_classes(),
            },
        })
    }

    /// True when the exact eigenbasis route is in use.
    pub fn uses_eigen_route(&self) -> bool {
        matches!(self.route, Route::Eigen { .. })
    }

    pub fn solve(&self, a: &Matrix, cfg: &ProxConfig) -> Result<ProxOutcome> {
        cfg.validate()?;
        if a.cols() != self.feature_dim {
            return Err(Error::dims(
                "prox_l2p",
                format!("A has {} columns, expected {}", a.cols(), self.feature_dim),
            ));
        }
        a.ensure_finite("prox_l2p input")?;
        if cfg.lambda == 0.0 {
            return Ok(ProxOutcome {
                w: a.clone(),
                residual: 0.0,
                converged: true,
                iterations: 0,
                objective_trace: vec![0.0],
            });
        }
        match &self.route {
            Route::Eigen { q, evals } => solve_eigen(a, q, evals, cfg),
            Route::Reweighted {
                x_all,
                class_of_col,
                n_classes,
            } => solve_reweighted(a, x_all, class_of_col, *n_classes, cfg),
        }
    }
}

/// Weight of group norm `u` after linearizing the power mean with group sum
/// `s = sum_k u_k^p`: `s^(1/p - 1) * u^(p - 1)`.
#[inline]
fn linearized_weight(s: f64, u: f64, p: f64) -> f64 {
    if p == 1.0 {
        1.0
    } else {
        s.powf(1.0 / p - 1.0) * u.powf(p - 1.0)
    }
}

fn relative_residual(grad_sq: f64, a: &Matrix, eta: f64) -> f64 {
    let scale = frobenius_sq(a).sqrt().max(1e-300);
    eta * grad_sq.sqrt() / scale
}

fn solve_eigen(a: &Matrix, q: &Matrix, evals: &[f64], cfg: &ProxConfig) -> Result<ProxOutcome> {
    let (h, d) = a.shape();
    let p = cfg.p;
    let a_hat = a.matmul(q)?;
    let mut w_hat = a_hat.clone();
    let norm_of = |row: &[f64]| -> f64 {
        row.iter()
            .zip(evals)
            .map(|(v, l)| l * v * v)
            .sum::<f64>()
            .sqrt()
    };
    let mut r: Vec<f64> = (0..h).map(|i| norm_of(w_hat.row(i))).collect();

    let objective = |w_hat: &Matrix, r: &[f64]| -> f64 {
        let fit: f64 = w_hat
            .as_slice()
            .iter()
            .zip(a_hat.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        fit / (2.0 * cfg.eta) + cfg.lambda * power_mean(r.iter().cloned(), p)
    };

    let mut f_prev = objective(&w_hat, &r);
    let mut trace = vec![f_prev];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut scratch = vec![0.0; d];

    for it in 1..=cfg.max_inner_iters {
        let s: f64 = r.iter().filter(|&&u| u >= ZERO_GROUP).map(|u| u.powf(p)).sum();
        let mut next = w_hat.clone();
        let mut r_next = r.clone();
        for i in 0..h {
            if r[i] < ZERO_GROUP {
                next.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                r_next[i] = 0.0;
                continue;
            }
            let t = cfg.eta * cfg.lambda * linearized_weight(s, r[i], p);
            r_next[i] = single_group_shrink(a_hat.row(i), evals, t, &mut scratch);
            next.row_mut(i).copy_from_slice(&scratch);
        }
        let f_next = objective(&next, &r_next);
        if f_next > f_prev + 1e-13 * f_prev.abs().max(1e-300) {
            break;
        }
        w_hat = next;
        r = r_next;
        f_prev = f_next;
        trace.push(f_next);
        iterations = it;

        let s_new: f64 = r.iter().filter(|&&u| u >= ZERO_GROUP).map(|u| u.powf(p)).sum();
        let mut grad_sq = 0.0;
        for i in 0..h {
            if r[i] < ZERO_GROUP {
                continue;
            }
            let coef = cfg.lambda * linearized_weight(s_new, r[i], p) / r[i];
            for j in 0..d {
                let g = (w_hat.get(i, j) - a_hat.get(i, j)) / cfg.eta + coef * evals[j] * w_hat.get(i, j);
                grad_sq += g * g;
            }
        }
        residual = relative_residual(grad_sq, a, cfg.eta);
        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }
    if iterations == 0 {
        // First candidate rejected; still report stationarity at A.
        residual = f64::INFINITY;
    }
    Ok(ProxOutcome {
        w: w_hat.matmul_nt(q)?,
        residual,
        converged,
        iterations,
        objective_trace: trace,
    })
}

/// Minimizes `1/2 ||w - a||^2 + t * ||w diag(sqrt(evals))||` in the
/// eigenbasis. Writes the minimizer into `out` and returns its weighted norm.
fn single_group_shrink(a: &[f64], evals: &[f64], t: f64, out: &mut [f64]) -> f64 {
    // Zero is optimal iff sum a_j^2 / l_j <= t^2.
    let dual: f64 = a.iter().zip(evals).map(|(v, l)| v * v / l).sum();
    if dual <= t * t || t.is_infinite() {
        out.iter_mut().for_each(|v| *v = 0.0);
        return 0.0;
    }
    let hi_bound: f64 = a
        .iter()
        .zip(evals)
        .map(|(v, l)| l * v * v)
        .sum::<f64>()
        .sqrt();
    // Secular equation phi(r) = 1/sqrt(q(r)) - 1 = 0 with
    // q(r) = sum l a^2 / (r + t l)^2; phi is increasing and concave, so
    // Newton from the left converges monotonically.
    let q_and_dq = |r: f64| -> (f64, f64) {
        let mut q = 0.0;
        let mut dq = 0.0;
        for (v, l) in a.iter().zip(evals) {
            let den = r + t * l;
            let num = l * v * v;
            q += num / (den * den);
            dq += num / (den * den * den);
        }
        (q, dq)
    };
    let (mut lo, mut hi) = (0.0_f64, hi_bound);
    let mut r = 0.0_f64;
    for _ in 0..200 {
        let (q, dq) = q_and_dq(r);
        let phi = 1.0 / q.sqrt() - 1.0;
        if phi < 0.0 {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
        if phi.abs() <= 1e-15 {
            break;
        }
        let dphi = dq / (q * q.sqrt());
        let mut next = r - phi / dphi;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 1e-15 * next.abs().max(1e-300) {
            r = next;
            break;
        }
        r = next;
    }
    for ((o, v), l) in out.iter_mut().zip(a).zip(evals) {
        *o = v * r / (r + t * l);
    }
    r
}

/// Per-row, per-class group norms of `P = W X_all`.
fn group_norms(pmat: &Matrix, class_of_col: &[usize], n_classes: usize) -> Matrix {
    let mut u = Matrix::zeros(pmat.rows(), n_classes);
    for i in 0..pmat.rows() {
        let row = pmat.row(i);
        let urow = u.row_mut(i);
        for (v, &c) in row.iter().zip(class_of_col) {
            urow[c] += v * v;
        }
        urow.iter_mut().for_each(|v| *v = v.sqrt());
    }
    u
}

fn penalty_from_norms(u: &Matrix, p: f64) -> f64 {
    (0..u.cols())
        .map(|c| power_mean((0..u.rows()).map(|i| u.get(i, c)), p))
        .sum()
}

/// Per-row, per-class quadratic weights `t_ic` of the double majorizer.
fn quadratic_weights(u: &Matrix, lambda: f64, p: f64) -> Matrix {
    let (h, n_classes) = u.shape();
    let mut t = Matrix::zeros(h, n_classes);
    for c in 0..n_classes {
        let s: f64 = (0..h)
            .map(|i| u.get(i, c))
            .filter(|&v| v >= ZERO_GROUP)
            .map(|v| v.powf(p))
            .sum::<f64>()
            .max(ZERO_GROUP.powf(p));
        for i in 0..h {
            let ui = u.get(i, c).max(ZERO_GROUP);
            t.set(i, c, lambda * linearized_weight(s, ui, p) / ui);
        }
    }
    t
}

/// `(T o (V X)) X^T` with `T` applied per row and per column class.
fn weighted_gram_apply(
    v: &Matrix,
    x_all: &Matrix,
    t: &Matrix,
    class_of_col: &[usize],
) -> Result<Matrix> {
    let mut pm = v.matmul(x_all)?;
    for i in 0..pm.rows() {
        let trow: Vec<f64> = t.row(i).to_vec();
        for (val, &c) in pm.row_mut(i).iter_mut().zip(class_of_col) {
            *val *= trow[c];
        }
    }
    pm.matmul_nt(x_all)
}

fn solve_reweighted(
    a: &Matrix,
    x_all: &Matrix,
    class_of_col: &[usize],
    n_classes: usize,
    cfg: &ProxConfig,
) -> Result<ProxOutcome> {
    let h = a.rows();
    let p = cfg.p;
    let eta = cfg.eta;
    let mut w = a.clone();
    let mut u = group_norms(&w.matmul(x_all)?, class_of_col, n_classes);
    let mut f_prev = cfg.lambda * penalty_from_norms(&u, p);
    let mut trace = vec![f_prev];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let b = a.scale(1.0 / eta);

    for it in 1..=cfg.max_inner_iters {
        let t = quadratic_weights(&u, cfg.lambda, p);
        let mut candidate = w.clone();
        let mut active = vec![true; h];
        for i in 0..h {
            if (0..n_classes).all(|c| u.get(i, c) < ZERO_GROUP) {
                active[i] = false;
                candidate.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        conjugate_gradient(&mut candidate, &b, x_all, &t, class_of_col, eta, &active)?;
        let pm = candidate.matmul(x_all)?;
        let u_next = group_norms(&pm, class_of_col, n_classes);
        let f_next =
            frobenius_sq(&candidate.sub(a)?) / (2.0 * eta) + cfg.lambda * penalty_from_norms(&u_next, p);
        if !f_next.is_finite() || f_next > f_prev + 1e-13 * f_prev.abs().max(1e-300) {
            break;
        }
        w = candidate;
        u = u_next;
        f_prev = f_next;
        trace.push(f_next);
        iterations = it;

        // Stationarity over rows whose groups are all nonzero.
        let t_now = quadratic_weights(&u, cfg.lambda, p);
        let pen_grad = weighted_gram_apply(&w, x_all, &t_now, class_of_col)?;
        let mut grad_sq = 0.0;
        for i in 0..h {
            if (0..n_classes).any(|c| u.get(i, c) < ZERO_GROUP) {
                continue;
            }
            for j in 0..w.cols() {
                let g = (w.get(i, j) - a.get(i, j)) / eta + pen_grad.get(i, j);
                grad_sq += g * g;
            }
        }
        residual = relative_residual(grad_sq, a, eta);
        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(ProxOutcome {
        w,
        residual,
        converged,
        iterations,
        objective_trace: trace,
    })
}

/// Row-wise CG on `w (I/eta + sum_c t_ic G_c) = b`, warm-started at `w`.
fn conjugate_gradient(
    w: &mut Matrix,
    b: &Matrix,
    x_all: &Matrix,
    t: &Matrix,
    class_of_col: &[usize],
    eta: f64,
    active: &[bool],
) -> Result<()> {
    let (h, d) = w.shape();
    let apply = |v: &Matrix| -> Result<Matrix> {
        let g = weighted_gram_apply(v, x_all, t, class_of_col)?;
        g.add_scaled(1.0 / eta, v)
    };
    let mut r = b.sub(&apply(w)?)?;
    for i in 0..h {
        if !active[i] {
            r.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let b_norm: Vec<f64> = row_group_norms(b);
    let mut rs: Vec<f64> = row_group_norms(&r).iter().map(|n| n * n).collect();
    let mut done: Vec<bool> = (0..h)
        .map(|i| !active[i] || rs[i].sqrt() <= 1e-13 * b_norm[i].max(1e-300))
        .collect();
    let mut dir = r.clone();
    let max_iter = (2 * d).clamp(10, 400);
    for _ in 0..max_iter {
        if done.iter().all(|&x| x) {
            break;
        }
        for i in 0..h {
            if done[i] {
                dir.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let hd = apply(&dir)?;
        for i in 0..h {
            if done[i] {
                continue;
            }
            let curv: f64 = dir.row(i).iter().zip(hd.row(i)).map(|(x, y)| x * y).sum();
            if !(curv > 0.0) {
                done[i] = true;
                continue;
            }
            let alpha = rs[i] / curv;
            for j in 0..d {
                let dj = dir.get(i, j);
                w.set(i, j, w.get(i, j) + alpha * dj);
                r.set(i, j, r.get(i, j) - alpha * hd.get(i, j));
            }
            let rs_new: f64 = r.row(i).iter().map(|v| v * v).sum();
            if rs_new.sqrt() <= 1e-13 * b_norm[i].max(1e-300) {
                done[i] = true;
            }
            let beta = rs_new / rs[i];
            rs[i] = rs_new;
            for j in 0..d {
                dir.set(i, j, r.get(i, j) + beta * dir.get(i, j));
            }
        }
    }
    Ok(())
}
