use sha2::{Digest, Sha256};

/// SHA-256 over the little-endian bytes of each slice, in order.
pub fn sha256_f64s(parts: &[&[f64]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        for v in *p {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn sha256_bytes(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short (64-bit) hex digest used to tag report lines.
pub fn short_digest(parts: &[&[f64]]) -> String {
    hex(&sha256_f64s(parts)[..8])
}
