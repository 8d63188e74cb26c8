//! Reproducible random streams.
//!
//! A [`Prng`] is identified by `(seed, stream)`. Samples come from ChaCha8
//! keyed with the seed expanded through SplitMix64, with the 64-bit stream
//! index selecting an independent ChaCha stream. ChaCha is counter-based, so
//! a given `(seed, stream)` pair yields the same bits on every platform.
//! Normal variates use the Marsaglia polar method on 53-bit uniforms in
//! `(-1, 1)`; both outputs of each accepted pair are used.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrngKey {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone)]
pub struct Prng {
    key: PrngKey,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Prng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        Self {
            key: PrngKey { seed, stream },
            rng,
            spare: None,
        }
    }

    pub fn key(&self) -> PrngKey {
        self.key
    }

    /// Fresh generator at the start of this key's sequence.
    pub fn restarted(&self) -> Self {
        Self::new(self.key.seed, self.key.stream)
    }

    /// Independent child stream, e.g. one per trial.
    pub fn substream(&self, index: u64) -> Self {
        let seed = splitmix64(self.key.seed ^ splitmix64(self.key.stream.wrapping_add(1)));
        Self::new(seed, index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        // Multiply-shift; bias is below 2^-64 * n and irrelevant at our sizes.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform direction on the unit sphere.
    pub fn unit_vector(&mut self, n: usize) -> Vec<f64> {
        loop {
            let mut v = self.normal_vec(n);
            let s = norm(&v);
            if s > 1e-300 {
                v.iter_mut().for_each(|x| *x /= s);
                return v;
            }
        }
    }
}

impl std::fmt::Debug for Prng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prng").field("key", &self.key).finish()
    }
}

/// Matrix with iid standard normal entries, filled row by row.
pub fn sample_gaussian_matrix(rows: usize, cols: usize, prng: &mut Prng) -> Matrix {
    let data = prng.normal_vec(rows * cols);
    Matrix::new(rows, cols, data).expect("gaussian samples are finite")
}

/// Random orthogonal matrix from QR of a Gaussian matrix (sign-corrected).
pub fn sample_orthogonal(n: usize, prng: &mut Prng) -> Matrix {
    let g = sample_gaussian_matrix(n, n, prng).to_nalgebra();
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Matrix::from_nalgebra(&q).expect("finite")
}
