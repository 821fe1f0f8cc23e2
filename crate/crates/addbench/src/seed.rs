//! Deterministic seed derivation and counter-based random draws.
//!
//! Every stochastic stage in the pipeline derives its randomness from a
//! single master seed through the stable mixers below, so outputs never
//! depend on scheduling order or platform.

/// SplitMix64 finalizer. Stable across platforms and releases.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over bytes, used to fold strings into seed material.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a per-item sub-seed from the master seed, an utterance id, the
/// codec index and the packet loss rate (carried as per-mille to keep the
/// hash input integral). Items hashed this way get independent streams, so
/// parallel scheduling order never changes results.
pub fn derive_seed(master: u64, utterance_id: &str, codec_index: u8, plr_permille: u32) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ fnv1a(utterance_id.as_bytes()));
    h = splitmix64(h ^ (u64::from(codec_index) << 32) ^ u64::from(plr_permille));
    h
}

/// Counter-based uniform draw in [0, 1). Keyed by (seed, counter), so the
/// i-th draw is independent of how many draws happened before it.
pub fn unit_draw(seed: u64, counter: u64) -> f64 {
    let bits = splitmix64(seed ^ splitmix64(counter));
    // 53 high bits give a uniform double in [0, 1).
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Minimal sequential generator for places that need a stream (Markov
/// chains, shuffles inside the library that must stay crate-stable).
#[derive(Debug, Clone)]
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_unit() * n as f64) as usize % n
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}
