//! Input construction for the three representation stages.

use super::video::Vidlet;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Column `k` is frame `k` of `vi` stacked on frame `k` of `vj`.
pub fn stage1_input(vi: &Vidlet, vj: &Vidlet) -> Result<Matrix> {
    if vi.frames.len() != vj.frames.len() || vi.pivot_index != vj.pivot_index {
        return Err(Error::dims(
            "stage1_input",
            format!("vidlets of {} and {} frames", vi.frames.len(), vj.frames.len()),
        ));
    }
    let (di, dj) = (vi.frames[0].len(), vj.frames[0].len());
    if di != dj {
        return Err(Error::dims("stage1_input", format!("frame dims {di} and {dj}")));
    }
    let cols: Vec<Vec<f64>> = vi
        .frames
        .iter()
        .zip(&vj.frames)
        .map(|(a, b)| a.iter().chain(b).copied().collect())
        .collect();
    Matrix::from_columns(&cols)
}

/// Pairs the pivot encoding (column `z`) with each neighbor, left to right.
pub fn stage2_input(h: &Matrix, z: usize) -> Result<Matrix> {
    if h.cols() != 2 * z + 1 {
        return Err(Error::dims(
            "stage2_input",
            format!("expected {} encodings for z = {z}, got {}", 2 * z + 1, h.cols()),
        ));
    }
    let pivot = h.column(z);
    let cols: Vec<Vec<f64>> = (0..h.cols())
        .filter(|&o| o != z)
        .map(|o| pivot.iter().copied().chain(h.column(o)).collect())
        .collect();
    Matrix::from_columns(&cols)
}

/// Concatenates the `2z` stage-2 encodings into one column.
pub fn stage3_input(s2: &Matrix, z: usize) -> Result<Matrix> {
    if s2.cols() != 2 * z {
        return Err(Error::dims(
            "stage3_input",
            format!("expected {} encodings for z = {z}, got {}", 2 * z, s2.cols()),
        ));
    }
    let col: Vec<f64> = (0..s2.cols()).flat_map(|c| s2.column(c)).collect();
    Matrix::from_vec(col.len(), 1, col)
}
