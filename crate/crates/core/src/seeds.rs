//! Deterministic seed derivation.
//!
//! Every random draw in the crate is keyed by a `u64` seed derived from a
//! base seed and one or more stream salts, so runs are reproducible bitwise
//! and work items (dataset rows, batches, worker threads) can be reordered
//! or parallelized without changing results.

/// SplitMix64 finalizer. Good avalanche, cheap, stable across platforms.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a stream salt.
pub fn derive(base: u64, salt: u64) -> u64 {
    splitmix64(splitmix64(base).wrapping_add(splitmix64(salt ^ 0xA5A5_5A5A_D00D_F00D)))
}

/// Derives a child seed from `base` and two salts (e.g. epoch and batch).
pub fn derive2(base: u64, a: u64, b: u64) -> u64 {
    derive(derive(base, a), b)
}

/// Derives a child seed from `base` and three salts.
pub fn derive3(base: u64, a: u64, b: u64, c: u64) -> u64 {
    derive(derive2(base, a, b), c)
}

/// FNV-1a over the bit patterns of a float slice. Used to key latent draws
/// by pair content so that duplicated batch entries share draws.
pub fn hash_f64s(init: u64, values: &[f64]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    let mut h = init ^ 0xCBF2_9CE4_8422_2325;
    for v in values {
        let bits = v.to_bits();
        for shift in [0, 16, 32, 48] {
            h ^= (bits >> shift) & 0xFFFF;
            h = h.wrapping_mul(PRIME);
        }
    }
    splitmix64(h)
}

// Stream salts. Values are arbitrary but fixed; changing them changes every
// derived seed, so treat them as part of the on-disk format.
pub const STREAM_PRIOR: u64 = 0x01;
pub const STREAM_SIM: u64 = 0x02;
pub const STREAM_INIT: u64 = 0x03;
pub const STREAM_SHUFFLE: u64 = 0x04;
pub const STREAM_LATENT: u64 = 0x05;
pub const STREAM_VALIDATION: u64 = 0x06;
pub const STREAM_SPLIT: u64 = 0x07;
pub const STREAM_DATA: u64 = 0x08;
pub const STREAM_TEST: u64 = 0x09;
pub const STREAM_EVAL: u64 = 0x0A;
pub const STREAM_ROUND: u64 = 0x0B;
pub const STREAM_CLASSIFIER: u64 = 0x0C;
