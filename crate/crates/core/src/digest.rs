//! Content hashing helpers shared by traces, mocks and provenance records.

use sha2::{Digest, Sha256};

/// Raw SHA-256 of `bytes`.
pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// First eight hex characters of the SHA-256 of `bytes`.
pub fn hex8(bytes: &[u8]) -> String {
    sha256_hex(bytes)[..8].to_string()
}

/// First eight characters of an already-computed hex digest.
pub fn short(digest_hex: &str) -> &str {
    &digest_hex[..digest_hex.len().min(8)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(hex8(b"abc"), "ba7816bf");
    }
}
