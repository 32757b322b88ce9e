//! Reproducible random streams for the simulation harness.
//!
//! Every stream is ChaCha20 keyed by the 64-bit study seed (little-endian in
//! the first eight key bytes, remaining key bytes zero) with the 64-bit stream
//! id selecting the ChaCha nonce. Replication `r` reads stream `r`; the pilot
//! sample used for censoring-rate calibration reads [`PILOT_STREAM`]. The
//! keystream is defined purely in 32-bit integer arithmetic, so draws are
//! identical on every platform and independent of thread scheduling.
//!
//! Continuous variates are produced by inversion of one uniform each:
//! uniforms are `((x >> 11) + 0.5) * 2^-53`, which lies strictly inside
//! (0, 1); normals use [`normal_quantile`]; exponentials use `-ln(u)`.
//! Logarithms and exponentials on this path come from `libm` rather than the
//! platform math library, which is not guaranteed to round identically.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::numeric::normal_quantile;

/// Stream id reserved for the censoring-rate pilot sample.
pub const PILOT_STREAM: u64 = (1 << 32) - 1;

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha20Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_NEG_53
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    pub fn standard_exponential(&mut self) -> f64 {
        -libm::log(self.uniform())
    }
}
