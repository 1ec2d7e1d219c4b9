//! Seeded random-number streams.
//!
//! Each logical source of randomness (a class's arrivals, a class's service
//! times, one RBM replication) gets its own counter-based stream derived from
//! `(seed, replication, stream id)`. Streams for the same `(seed,
//! replication, class)` coincide across traffic parameters and policies,
//! which is what makes common-random-number comparisons across `r` values
//! meaningful.

use crate::model::FittedDistribution;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64; used to mix seed components and for lightweight fixture
/// generation. Not used for simulation variates.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform01(&mut self) -> f64 {
        u64_to_open01(self.next_u64())
    }
}

/// Maps a `u64` to the open interval (0, 1): 53 mantissa bits, offset by
/// half an ulp so neither endpoint is attainable.
#[inline]
fn u64_to_open01(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Identifies one independent stream within a replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    Arrival(usize),
    Service(usize),
    Diffusion(usize),
}

impl StreamKind {
    fn tag(self) -> (u64, u64) {
        match self {
            StreamKind::Arrival(class) => (1, class as u64),
            StreamKind::Service(class) => (2, class as u64),
            StreamKind::Diffusion(path) => (3, path as u64),
        }
    }
}

/// A deterministic variate stream backed by ChaCha8.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn derive(seed: u64, replication: u64, kind: StreamKind) -> Self {
        let (group, member) = kind.tag();
        let mut mixer = SplitMix64::new(seed ^ 0xA076_1D64_78BD_642F);
        let a = mixer.next_u64() ^ SplitMix64::new(replication).next_u64();
        let b = mixer.next_u64() ^ SplitMix64::new(group.wrapping_mul(0x9E37_79B9).wrapping_add(member)).next_u64();
        let mut key_rng = SplitMix64::new(a ^ b.rotate_left(17));
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&key_rng.next_u64().to_le_bytes());
        }
        Stream { rng: ChaCha8Rng::from_seed(key), spare_normal: None }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform01(&mut self) -> f64 {
        u64_to_open01(self.rng.next_u64())
    }

    /// Standard normal via Box-Muller; the second variate of each pair is
    /// cached so draws stay aligned with the underlying counter stream.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform01();
        let u2 = self.uniform01();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Draws a variate from the fitted family rescaled to the given mean.
    /// The support of every family is strictly positive.
    pub fn sample(&mut self, dist: &FittedDistribution, mean: f64) -> f64 {
        match dist {
            FittedDistribution::Exponential => -mean * self.uniform01().ln(),
            FittedDistribution::Erlang { k } => {
                let stage_mean = mean / f64::from(*k);
                let mut total = 0.0;
                for _ in 0..*k {
                    total += -stage_mean * self.uniform01().ln();
                }
                total
            }
            FittedDistribution::Uniform { lo_rel, hi_rel } => {
                mean * (lo_rel + (hi_rel - lo_rel) * self.uniform01())
            }
        }
    }
}
