//! Deterministic seed derivation and keyed noise streams.
//!
//! Every stochastic outcome in the simulator is a pure function of a master
//! seed plus a structured key, so that counterfactual configurations can be
//! replayed on identical randomness (common random numbers). Mixing uses the
//! splitmix64 finalizer over plain integer arithmetic; results are identical
//! across platforms and process runs.

/// splitmix64 finalizer. Full-avalanche mixing of a 64-bit word.
#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes one word into a running state.
#[inline]
pub fn mix(state: u64, word: u64) -> u64 {
    finalize(state ^ word.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(31))
}

/// Folds a byte string into a 64-bit word (FNV-1a).
#[inline]
pub fn fold_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a named substream seed from a master seed.
///
/// Used to split one user-facing seed into independent streams (input
/// generation, backend noise, policy sampling, ...).
pub fn derive(master: u64, tag: &str) -> u64 {
    mix(finalize(master), fold_bytes(tag.as_bytes()))
}

/// Seed for a single episode within a stream.
pub fn episode_seed(stream_seed: u64, t: u64) -> u64 {
    mix(stream_seed, t)
}

/// Key addressing one stochastic draw inside an episode.
///
/// Two configurations that route the same call site to the same backend see
/// the same draw, which is what makes counterfactual regret accounting exact.
/// The invocation counter separates repeated dynamic executions of a site
/// inside a loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseKey<'a> {
    /// Per-episode seed (see [`episode_seed`]).
    pub episode_seed: u64,
    /// Zero-based call-site index.
    pub site: u32,
    /// Zero-based invocation counter for this site within the episode.
    pub invocation: u32,
    /// Identity of the backend being invoked.
    pub backend_id: &'a str,
}

impl NoiseKey<'_> {
    /// Collapses the key plus a stream discriminator into one word.
    pub fn word(&self, stream: u64) -> u64 {
        let mut h = self.episode_seed;
        h = mix(h, u64::from(self.site));
        h = mix(h, u64::from(self.invocation));
        h = mix(h, fold_bytes(self.backend_id.as_bytes()));
        mix(h, stream)
    }

    /// Uniform draw in `[0, 1)` for the given stream.
    pub fn unit(&self, stream: u64) -> f64 {
        to_unit(self.word(stream))
    }
}

/// Maps a word to `[0, 1)` using the top 53 bits.
#[inline]
pub fn to_unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
