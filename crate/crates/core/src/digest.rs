//! Content digests used to stamp every artifact with the config it came from.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of `bytes`, truncated to 16 hex characters.
pub fn short_digest(bytes: &[u8]) -> String {
    let full = Sha256::digest(bytes);
    hex::encode(&full[..8])
}

/// Digest of the canonical JSON encoding of `value`.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    short_digest(&serde_json::to_vec(value).expect("config types serialize"))
}
