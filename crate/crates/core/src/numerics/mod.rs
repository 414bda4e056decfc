//! Dense matrix arithmetic, the logistic activation and seeded weight
//! initialization.

mod matrix;

pub use matrix::{frobenius_sq, Matrix};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed for every random draw in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for a numbered sub-stream (splitmix64 mix).
    pub fn derive(self, stream: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Element-wise logistic function.
pub fn sigmoid(m: &Matrix) -> Matrix {
    m.map(sigmoid_scalar)
}

/// Uniform weights in `[-r, r]` with `r = sqrt(6 / (rows + cols))`.
pub fn init_weights(rows: usize, cols: usize, seed: Seed) -> Matrix {
    let r = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let mut rng = seed.rng();
    let data = (0..rows * cols).map(|_| rng.random_range(-r..=r)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}
