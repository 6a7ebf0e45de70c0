//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by an explicit seed, so results never depend on scheduling.

/// Mixes `base` and `stream` into an independent 64-bit seed (SplitMix64).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
