//! Deterministic derivation of per-stream RNG seeds from one root seed.

/// Mixes a root seed with a stream index so each stream gets an independent,
/// platform-stable seed (splitmix64 finalizer).
pub(crate) fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
