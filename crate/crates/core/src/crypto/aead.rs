use aes_gcm::aead::{Aead as _, KeyInit, Payload};
use aes_gcm::Aes128Gcm;
use chacha20poly1305::ChaCha20Poly1305;

use super::suite::Aead;
use super::{CipherSuite, CryptoError};

/// `iv XOR left-zero-padded big-endian seq`.
pub fn sequence_nonce(iv: &[u8], seq: u64) -> Vec<u8> {
    let mut nonce = iv.to_vec();
    let n = nonce.len();
    for (i, b) in seq.to_be_bytes().iter().enumerate() {
        nonce[n - 8 + i] ^= b;
    }
    nonce
}

fn check_inputs(suite: CipherSuite, key: &[u8], iv: &[u8], seq: u64) -> Result<(), CryptoError> {
    if key.len() != suite.key_len() {
        return Err(CryptoError::BadLength {
            what: "AEAD key",
            expected: suite.key_len(),
            got: key.len(),
        });
    }
    if iv.len() != suite.iv_len() {
        return Err(CryptoError::BadLength {
            what: "AEAD iv",
            expected: suite.iv_len(),
            got: iv.len(),
        });
    }
    if seq == u64::MAX {
        return Err(CryptoError::NonceExhausted);
    }
    Ok(())
}

/// Seals `plaintext` under the per-message nonce for `seq`. Output is
/// ciphertext followed by the tag.
pub fn seal(
    suite: CipherSuite,
    key: &[u8],
    iv: &[u8],
    seq: u64,
    plaintext: &[u8],
    aad: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    check_inputs(suite, key, iv, seq)?;
    let nonce = sequence_nonce(iv, seq);
    audit::record(key, &nonce);
    let payload = Payload {
        msg: plaintext,
        aad,
    };
    let out = match suite.aead() {
        Aead::Aes128Gcm => Aes128Gcm::new_from_slice(key)
            .expect("length checked")
            .encrypt(aes_gcm::Nonce::from_slice(&nonce), payload),
        Aead::ChaCha20Poly1305 => ChaCha20Poly1305::new_from_slice(key)
            .expect("length checked")
            .encrypt(chacha20poly1305::Nonce::from_slice(&nonce), payload),
    };
    out.map_err(|_| CryptoError::AuthenticationFailure)
}

pub fn open(
    suite: CipherSuite,
    key: &[u8],
    iv: &[u8],
    seq: u64,
    ciphertext: &[u8],
    aad: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    check_inputs(suite, key, iv, seq)?;
    if ciphertext.len() < suite.tag_len() {
        return Err(CryptoError::AuthenticationFailure);
    }
    let nonce = sequence_nonce(iv, seq);
    let payload = Payload {
        msg: ciphertext,
        aad,
    };
    let out = match suite.aead() {
        Aead::Aes128Gcm => Aes128Gcm::new_from_slice(key)
            .expect("length checked")
            .decrypt(aes_gcm::Nonce::from_slice(&nonce), payload),
        Aead::ChaCha20Poly1305 => ChaCha20Poly1305::new_from_slice(key)
            .expect("length checked")
            .decrypt(chacha20poly1305::Nonce::from_slice(&nonce), payload),
    };
    out.map_err(|_| CryptoError::AuthenticationFailure)
}

/// Opt-in, per-thread record of every (key, nonce) pair passed to `seal`,
/// used to check nonce uniqueness across a whole session.
pub mod audit {
    use std::cell::RefCell;
    use std::collections::HashSet;

    #[derive(Debug, Default, Clone, PartialEq, Eq)]
    pub struct AuditReport {
        pub seals: usize,
        pub reused: usize,
    }

    thread_local! {
        static SEEN: RefCell<Option<(HashSet<Vec<u8>>, AuditReport)>> = const { RefCell::new(None) };
    }

    pub fn begin() {
        SEEN.with(|s| *s.borrow_mut() = Some((HashSet::new(), AuditReport::default())));
    }

    pub fn finish() -> AuditReport {
        SEEN.with(|s| s.borrow_mut().take().map(|(_, r)| r).unwrap_or_default())
    }

    pub(super) fn record(key: &[u8], nonce: &[u8]) {
        SEEN.with(|s| {
            if let Some((seen, report)) = s.borrow_mut().as_mut() {
                let mut k = key.to_vec();
                k.extend_from_slice(nonce);
                report.seals += 1;
                if !seen.insert(k) {
                    report.reused += 1;
                }
            }
        });
    }
}
