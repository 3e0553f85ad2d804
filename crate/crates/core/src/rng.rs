//! Deterministic random streams for the simulation engine.
//!
//! Every stream is a ChaCha8 generator keyed by the 64-bit master seed (via
//! `seed_from_u64`) and selected by a 64-bit stream number through
//! `set_stream`. The population draw uses stream 0 and replication `r` uses
//! stream `r + 1`, so replications can run in any order. Uniforms, integers
//! and normals are derived here rather than through `rand`'s distribution
//! machinery so the bit pattern of every draw is pinned by this file alone.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normal;

/// Stream number of the population draw.
pub const POPULATION_STREAM: u64 = 0;

/// Stream number for replication `rep`.
pub fn replication_stream(rep: usize) -> u64 {
    rep as u64 + 1
}

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SimRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by rejection, without modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX % n) - 1;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    /// Standard normal by inversion.
    pub fn standard_normal(&mut self) -> f64 {
        normal::quantile(self.uniform()).expect("uniform draw lies in (0, 1)")
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }
}
