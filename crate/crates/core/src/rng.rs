//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a stream addressed by a key
//! `(seed, domain, major, minor)`. The key is packed into a ChaCha8 key, so a
//! stream's contents depend only on its address and never on how many other
//! streams were consumed before it, or on which thread consumed them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Separates the uses of randomness so that, for example, the dropout masks
/// of time step `t` never share a stream with the draft sampler at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Domain {
    /// Dropout masks, addressed by (time step, head index).
    Mask = 1,
    /// Rejection-sampling acceptance draws, addressed by (time step, 0).
    Lossless = 2,
    /// Sampled-mode draft proposals, addressed by (time step, 0).
    Draft = 3,
    /// Sampled-mode bonus tokens, addressed by (time step, 0).
    Bonus = 4,
    /// Model parameter generation, addressed by (tensor id, 0).
    Params = 5,
    /// Perturbation noise for derived draft models.
    Perturb = 6,
    /// Prompt generation, addressed by (prompt index, 0).
    Prompt = 7,
    /// Free-form streams for tests and examples.
    User = 255,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub domain: Domain,
    pub major: u64,
    pub minor: u64,
}

impl StreamKey {
    pub fn new(seed: u64, domain: Domain, major: u64, minor: u64) -> Self {
        Self {
            seed,
            domain,
            major,
            minor,
        }
    }

    pub fn stream(&self) -> Stream {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..12].copy_from_slice(&(self.domain as u32).to_le_bytes());
        key[12..20].copy_from_slice(&self.major.to_le_bytes());
        key[20..28].copy_from_slice(&self.minor.to_le_bytes());
        key[28..32].copy_from_slice(b"dmch");
        ChaCha8Rng::from_seed(key)
    }
}

/// Shorthand for `StreamKey::new(..).stream()`.
pub fn stream(seed: u64, domain: Domain, major: u64, minor: u64) -> Stream {
    StreamKey::new(seed, domain, major, minor).stream()
}

/// The `k` per-head mask streams for time step `step`.
pub fn head_streams(seed: u64, step: u64, k: usize) -> Vec<Stream> {
    (0..k as u64)
        .map(|head| stream(seed, Domain::Mask, step, head))
        .collect()
}

/// Derives the seed for an independent sub-run (a decode stream or a sweep
/// cell) from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
