use sha2::{Digest, Sha256};

/// SHA-256 over length-prefixed parts, so ("ab", "c") and ("a", "bc") differ.
pub(crate) fn digest_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub(crate) fn hex_prefix(parts: &[&[u8]], chars: usize) -> String {
    let mut s = hex::encode(digest_parts(parts));
    s.truncate(chars);
    s
}

pub(crate) fn u64_of(parts: &[&[u8]]) -> u64 {
    let d = digest_parts(parts);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Uniform draw in [0, 1) derived from the digest.
pub(crate) fn unit_of(parts: &[&[u8]]) -> f64 {
    (u64_of(parts) >> 11) as f64 / (1u64 << 53) as f64
}
