use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// First 16 hex characters of the SHA-256, used for compact digests in traces.
pub fn short_digest(bytes: impl AsRef<[u8]>) -> String {
    let mut full = sha256_hex(bytes);
    full.truncate(16);
    full
}
