use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Pairwise label agreement: `+1` for a shared label, `-1` for two known and
/// different labels, `0` when either label is unknown. The diagonal is `+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisionMatrix {
    m: Matrix,
    /// Dense class ids (first-appearance order) when built from labels.
    ids: Option<Vec<Option<usize>>>,
}

impl SupervisionMatrix {
    /// Wraps an explicit matrix after checking symmetry, the `{-1, 0, 1}`
    /// alphabet and the unit diagonal.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::dims("SupervisionMatrix", format!("{n}x{} is not square", m.cols())));
        }
        for i in 0..n {
            if m.get(i, i) != 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "supervision diagonal entry {i} is {}, expected 1",
                    m.get(i, i)
                )));
            }
            for j in 0..n {
                let v = m.get(i, j);
                if v != 1.0 && v != -1.0 && v != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "supervision entry ({i},{j}) = {v} not in {{-1,0,1}}"
                    )));
                }
                if v != m.get(j, i) {
                    return Err(Error::InvalidParameter(format!(
                        "supervision matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { m, ids: None })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn len(&self) -> usize {
        self.m.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.m.rows() == 0
    }
}

/// `M` from per-sample labels; `None` marks an unknown label.
pub fn build_supervision_matrix<L: PartialEq>(labels: &[Option<L>]) -> SupervisionMatrix {
    let mut seen: Vec<&L> = Vec::new();
    let ids: Vec<Option<usize>> = labels
        .iter()
        .map(|l| {
            l.as_ref().map(|l| match seen.iter().position(|s| *s == l) {
                Some(k) => k,
                None => {
                    seen.push(l);
                    seen.len() - 1
                }
            })
        })
        .collect();
    let n = ids.len();
    let m = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            return 1.0;
        }
        match (ids[i], ids[j]) {
            (Some(a), Some(b)) if a == b => 1.0,
            (Some(_), Some(_)) => -1.0,
            _ => 0.0,
        }
    });
    SupervisionMatrix { m, ids: Some(ids) }
}

/// Convenience for fully labeled data.
pub fn supervision_from_classes(classes: &[usize]) -> SupervisionMatrix {
    let labels: Vec<Option<usize>> = classes.iter().map(|&c| Some(c)).collect();
    build_supervision_matrix(&labels)
}

/// `L = D - M` with `D = diag(row sums of M)`.
#[derive(Clone, Debug)]
pub struct Laplacian {
    l: Matrix,
    structure: Option<LabelStructure>,
}

#[derive(Clone, Debug)]
struct LabelStructure {
    ids: Vec<Option<usize>>,
    n_classes: usize,
    degree: Vec<f64>,
}

pub fn build_laplacian(m: &SupervisionMatrix) -> Laplacian {
    let mm = &m.m;
    let n = mm.rows();
    let degree: Vec<f64> = (0..n).map(|i| mm.row(i).iter().sum()).collect();
    let mut l = mm.scale(-1.0);
    for (i, d) in degree.iter().enumerate() {
        l.set(i, i, l.get(i, i) + d);
    }
    let structure = m.ids.as_ref().map(|ids| LabelStructure {
        ids: ids.clone(),
        n_classes: ids.iter().flatten().max().map_or(0, |k| k + 1),
        degree,
    });
    Laplacian { l, structure }
}

impl Laplacian {
    pub fn matrix(&self) -> &Matrix {
        &self.l
    }

    pub fn len(&self) -> usize {
        self.l.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.l.rows() == 0
    }

    /// `H L`. Label-built Laplacians use class sums, `O(rows(H) * N)`.
    pub fn right_apply(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.len() {
            return Err(Error::dims(
                "Laplacian::right_apply",
                format!("H has {} columns, Laplacian is {n}x{n}", h.cols(), n = self.len()),
            ));
        }
        let Some(s) = &self.structure else {
            return h.matmul(&self.l);
        };
        let (k, n) = h.shape();
        let mut out = Matrix::zeros(k, n);
        let mut class_sum = vec![0.0; s.n_classes];
        for r in 0..k {
            class_sum.iter_mut().for_each(|v| *v = 0.0);
            let row = h.row(r);
            for (v, id) in row.iter().zip(&s.ids) {
                if let Some(c) = id {
                    class_sum[*c] += v;
                }
            }
            let known: f64 = class_sum.iter().sum();
            let dst = out.row_mut(r);
            for j in 0..n {
                dst[j] = match s.ids[j] {
                    // d_j h_j - (2 S_c - S_known)
                    Some(c) => s.degree[j] * row[j] - (2.0 * class_sum[c] - known),
                    None => 0.0,
                };
            }
        }
        Ok(out)
    }
}

/// `trace(H^T H L)`.
pub fn discrimination_term(h: &Matrix, lap: &Laplacian) -> Result<f64> {
    lap.right_apply(h)?.dot(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{init_weights, Seed};
    use proptest::prelude::*;

    #[test]
    fn supervision_examples() {
        let same = build_supervision_matrix(&[Some('a'), Some('a')]);
        assert_eq!(same.matrix().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        let diff = build_supervision_matrix(&[Some('a'), Some('b')]);
        assert_eq!(diff.matrix().as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        let three = build_supervision_matrix(&[Some("a"), Some("a"), Some("b")]);
        assert_eq!(
            three.matrix().as_slice(),
            &[1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0]
        );
        let unknown = build_supervision_matrix(&[Some(1), None, Some(2)]);
        assert_eq!(unknown.matrix().row(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn laplacian_examples() {
        let l = build_laplacian(&build_supervision_matrix(&[Some(0), Some(0)]));
        assert_eq!(l.matrix().as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        let l = build_laplacian(&build_supervision_matrix(&[Some(0), Some(1)]));
        assert_eq!(l.matrix().as_slice(), &[-1.0, 1.0, 1.0, -1.0]);

        // Row-sum oracle on the three-sample case.
        let m = build_supervision_matrix(&[Some("a"), Some("a"), Some("b")]);
        let l = build_laplacian(&m);
        for i in 0..3 {
            let d: f64 = m.matrix().row(i).iter().sum();
            for j in 0..3 {
                let want = if i == j { d } else { 0.0 } - m.matrix().get(i, j);
                assert_eq!(l.matrix().get(i, j), want);
            }
        }
    }

    #[test]
    fn from_matrix_validates() {
        assert!(SupervisionMatrix::from_matrix(Matrix::identity(3)).is_ok());
        let asym = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(SupervisionMatrix::from_matrix(asym).is_err());
        let bad_diag = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(SupervisionMatrix::from_matrix(bad_diag).is_err());
    }

    #[test]
    fn discrimination_examples() {
        let same = build_laplacian(&build_supervision_matrix(&[Some(0), Some(0)]));
        let diff = build_laplacian(&build_supervision_matrix(&[Some(0), Some(1)]));
        let equal_cols = Matrix::from_rows(&[[0.3, 0.3], [0.9, 0.9]]).unwrap();
        assert_eq!(discrimination_term(&equal_cols, &same).unwrap(), 0.0);
        let h = Matrix::identity(2);
        assert!((discrimination_term(&h, &same).unwrap() - 2.0).abs() < 1e-15);
        assert!((discrimination_term(&h, &diff).unwrap() + 2.0).abs() < 1e-15);
        assert!(discrimination_term(&Matrix::zeros(2, 3), &same).is_err());
    }

    proptest! {
        #[test]
        fn laplacian_rows_sum_to_zero(labels in prop::collection::vec(prop::option::of(0u8..4), 1..12)) {
            let l = build_laplacian(&build_supervision_matrix(&labels));
            for i in 0..l.len() {
                prop_assert_eq!(l.matrix().row(i).iter().sum::<f64>(), 0.0);
            }
        }

        #[test]
        fn structured_apply_matches_dense(labels in prop::collection::vec(prop::option::of(0u8..4), 1..15), seed in 0u64..100) {
            let m = build_supervision_matrix(&labels);
            let lap = build_laplacian(&m);
            let h = init_weights(3, labels.len(), Seed(seed));
            let fast = lap.right_apply(&h).unwrap();
            let dense = h.matmul(lap.matrix()).unwrap();
            for (a, b) in fast.as_slice().iter().zip(dense.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn two_sample_expansion(seed in 0u64..1000) {
            let h = init_weights(4, 2, Seed(seed));
            let dist: f64 = (0..4).map(|r| (h.get(r, 0) - h.get(r, 1)).powi(2)).sum();
            let same = build_laplacian(&build_supervision_matrix(&[Some(0), Some(0)]));
            let diff = build_laplacian(&build_supervision_matrix(&[Some(0), Some(1)]));
            prop_assert!((discrimination_term(&h, &same).unwrap() - dist).abs() < 1e-10);
            prop_assert!((discrimination_term(&h, &diff).unwrap() + dist).abs() < 1e-10);
        }
    }
}
