//! Content hashes and derived seeds.

use sha2::{Digest, Sha256};

/// SHA-256 over length-prefixed parts.
pub fn content_hash(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent seed for a named sub-task of a master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let d = content_hash(&[&master.to_le_bytes(), label.as_bytes()]);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Per-page seed, e.g. for fold-in inference.
pub fn page_seed(master: u64, stream_id: &str, page_index: usize) -> u64 {
    let d = content_hash(&[
        &master.to_le_bytes(),
        stream_id.as_bytes(),
        &(page_index as u64).to_le_bytes(),
    ]);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}
