//! Seedable generator and Gaussian sampling.
//!
//! The generator is SplitMix64: a Weyl sequence `state += 0x9E37_79B9_7F4A_7C15`
//! followed by a fixed output mix. Normal deviates use the Box-Muller transform,
//! caching the second deviate of each pair. Streams are identical on every
//! platform since only integer arithmetic and IEEE `f64` operations are used.
//!
//! Independent streams for trial `i` of an experiment seeded with `s` start
//! from [`substream_seed`]`(s, i)`.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Matrix, Vector};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `index` derived from `seed`:
/// `mix64(seed ⊕ mix64(index + γ))` with `γ` the SplitMix64 increment.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    state: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            state: seed,
            spare_normal: None,
        }
    }

    /// Generator for substream `index` of `seed`.
    pub fn substream(seed: u64, index: u64) -> Self {
        Rng::new(substream_seed(seed, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Matrix with i.i.d. `N(0, std²)` entries, filled row by row.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    assert!(std >= 0.0, "gaussian_matrix: negative std");
    Matrix::from_fn(rows, cols, |_, _| std * rng.normal())
}

pub fn gaussian_vector(rng: &mut Rng, dim: usize, std: f64) -> Vector {
    assert!(std >= 0.0, "gaussian_vector: negative std");
    Vector::new((0..dim).map(|_| std * rng.normal()).collect())
}
