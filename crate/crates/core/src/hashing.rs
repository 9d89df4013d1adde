//! Stable, platform-independent hashing used for embedding buckets and seed
//! derivation. `std`'s `DefaultHasher` is explicitly unstable across releases,
//! so it cannot back anything that ends up in a cache or a results file.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer; decorrelates structured inputs.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a sequence of labels.
pub fn derive_seed(parent: u64, parts: &[&str]) -> u64 {
    parts.iter().fold(mix64(parent), |acc, part| {
        // length prefix keeps ("ab","c") distinct from ("a","bc")
        let mut buf = Vec::with_capacity(part.len() + 8);
        buf.extend_from_slice(&(part.len() as u64).to_le_bytes());
        buf.extend_from_slice(part.as_bytes());
        mix64(acc ^ fnv1a(&buf))
    })
}
