//! Counter-based seeded randomness.
//!
//! Each draw hashes `(key, counter)` with the splitmix64 finalizer, so a
//! stream is a pure function of the seed and the call sequence, and derived
//! streams can be split off without touching the parent's counter.

use crate::numerics::dense::DenseMatrix;
use crate::numerics::scalar::Scalar;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based random stream.
#[derive(Clone, Debug)]
pub struct SeededRng {
    key: u64,
    counter: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { key: seed, counter: 0 }
    }

    /// Independent stream keyed off this one; the parent is not advanced.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            key: mix(self.key ^ mix(tag.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Standard normal draw via the Box-Muller transform (two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Matrix of i.i.d. standard normal draws, filled row-major.
    pub fn gaussian_matrix<S: Scalar>(&mut self, rows: usize, cols: usize) -> DenseMatrix<S> {
        let mut out = DenseMatrix::zeros(rows, cols);
        for v in out.data_mut() {
            *v = S::from_f64(self.normal());
        }
        out
    }

    /// Matrix of uniform draws in `[-bound, bound]`, filled row-major.
    pub fn uniform_matrix<S: Scalar>(&mut self, rows: usize, cols: usize, bound: f64) -> DenseMatrix<S> {
        let mut out = DenseMatrix::zeros(rows, cols);
        for v in out.data_mut() {
            *v = S::from_f64((self.uniform() * 2.0 - 1.0) * bound);
        }
        out
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.uniform_usize(i + 1);
            xs.swap(i, j);
        }
    }
}
