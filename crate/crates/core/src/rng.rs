//! Deterministic random streams.
//!
//! A stream is a ChaCha8 generator keyed by `(seed, domain, index)`: the seed
//! and a domain label select the key, the index selects the ChaCha stream.
//! Ensemble members, training samples and bootstrap resamples each get their
//! own index, so results do not depend on how work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    key: u64,
}

impl Streams {
    pub fn new(seed: u64, domain: &str) -> Self {
        Self {
            key: splitmix(seed ^ fnv1a(domain.as_bytes())),
        }
    }

    /// Child family, e.g. one per epoch or per rollout lag.
    pub fn derive(&self, label: u64) -> Self {
        Self {
            key: splitmix(self.key ^ splitmix(label.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        }
    }

    pub fn stream(&self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_normal(rng: &mut impl Rng, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

pub fn normal_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    fill_normal(rng, &mut v);
    v
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
