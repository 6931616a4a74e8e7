use crate::crypto::{hkdf_expand, hkdf_extract, CryptoError, SessionKeys};

/// Which endpoint sealed a value. Selects the write key and IV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Client,
    Service,
}

impl Direction {
    pub fn write_key(self, keys: &SessionKeys) -> &[u8] {
        match self {
            Direction::Client => &keys.client_write_key,
            Direction::Service => &keys.service_write_key,
        }
    }

    pub fn iv(self, keys: &SessionKeys) -> &[u8] {
        match self {
            Direction::Client => &keys.client_iv,
            Direction::Service => &keys.service_iv,
        }
    }

    fn label(self) -> &'static [u8] {
        match self {
            Direction::Client => b"httpa2 cargo key c",
            Direction::Service => b"httpa2 cargo key s",
        }
    }
}

/// Highest message sequence whose sub-sequences still fit in 64 bits.
const MAX_MESSAGE_SEQ: u64 = (1 << 47) - 1;
/// Sub-indices `0x8000..0xffff` carry wrapped secrets; below are cargo
/// regions.
pub const SECRET_SUBINDEX: u64 = 0x8000;
/// Sub-index of the sealed cargo metadata.
pub const METADATA_SUBINDEX: u64 = 0xffff;

/// Per-item AEAD sequence inside message `seq`: `(seq << 16) | sub`.
pub fn sub_sequence(seq: u64, sub: u64) -> Result<u64, CryptoError> {
    if seq > MAX_MESSAGE_SEQ || sub > 0xffff {
        return Err(CryptoError::NonceExhausted);
    }
    Ok((seq << 16) | sub)
}

/// Key for cargo regions protected under provisioned secret `k`.
pub fn secret_cargo_key(keys: &SessionKeys, secret: &[u8], dir: Direction) -> Vec<u8> {
    let prk = zeroize::Zeroizing::new(hkdf_extract(&keys.master_secret, secret));
    hkdf_expand(&prk, dir.label(), keys.suite.key_len())
}
