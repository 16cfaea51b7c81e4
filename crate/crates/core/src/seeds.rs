//! Stable sub-seed derivation. Every random stream in the lab is seeded from
//! the master seed plus a context label, so results do not depend on
//! scheduling order and are reproducible across platforms and builds.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    let mut h = hash;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a sub-seed from a master seed, a label, and two indices
/// (e.g. iteration and group index). FNV-1a, stable forever.
pub fn derive_seed(master: u64, label: &str, key: &str, a: u64, b: u64) -> u64 {
    let mut h = FNV_OFFSET;
    h = fnv1a(h, &master.to_le_bytes());
    h = fnv1a(h, label.as_bytes());
    h = fnv1a(h, key.as_bytes());
    h = fnv1a(h, &a.to_le_bytes());
    h = fnv1a(h, &b.to_le_bytes());
    h
}
