//! Small shared helpers.

/// FNV-1a over raw bytes; used for parameter fingerprints, split
/// fingerprints, and file hashes where we only need determinism.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fold an `f64` slice into an FNV-1a fingerprint of its exact bit patterns.
pub fn fingerprint_f64(h: &mut u64, xs: &[f64]) {
    for &x in xs {
        for b in x.to_bits().to_le_bytes() {
            *h ^= b as u64;
            *h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Round half away from zero; quota arithmetic uses this everywhere.
pub fn round_half_up(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        x.round() as usize
    }
}
