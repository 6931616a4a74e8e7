use hkdf::Hkdf;
use sha2::{Digest, Sha256};
use zeroize::Zeroize;

use super::{CipherSuite, CryptoError, ProtocolRng};

/// Expansion labels, one per derived output.
pub mod labels {
    pub const CLIENT_KEY: &[u8] = b"httpa2 c key";
    pub const SERVICE_KEY: &[u8] = b"httpa2 s key";
    pub const CLIENT_IV: &[u8] = b"httpa2 c iv";
    pub const SERVICE_IV: &[u8] = b"httpa2 s iv";
    pub const TICKET: &[u8] = b"httpa2 ticket";
    pub const BINDER: &[u8] = b"httpa2 binder";
}

/// 32-byte handshake random.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct RandomNonce([u8; 32]);

impl RandomNonce {
    pub fn generate(rng: &ProtocolRng) -> Self {
        RandomNonce(rng.array())
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::BadLength {
            what: "random nonce",
            expected: 32,
            got: bytes.len(),
        })?;
        Ok(RandomNonce(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for RandomNonce {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RandomNonce({})", crate::wire::b64_encode(&self.0))
    }
}

/// Symmetric material shared by both endpoints after the handshake.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub suite: CipherSuite,
    pub client_write_key: Vec<u8>,
    pub service_write_key: Vec<u8>,
    pub client_iv: Vec<u8>,
    pub service_iv: Vec<u8>,
    pub ticket_key: Vec<u8>,
    pub binder_key: Vec<u8>,
    pub master_secret: Vec<u8>,
}

impl SessionKeys {
    /// Every secret byte string, for leak scans.
    pub fn secret_parts(&self) -> [&[u8]; 7] {
        [
            &self.client_write_key,
            &self.service_write_key,
            &self.client_iv,
            &self.service_iv,
            &self.ticket_key,
            &self.binder_key,
            &self.master_secret,
        ]
    }
}

impl Drop for SessionKeys {
    fn drop(&mut self) {
        self.client_write_key.zeroize();
        self.service_write_key.zeroize();
        self.client_iv.zeroize();
        self.service_iv.zeroize();
        self.ticket_key.zeroize();
        self.binder_key.zeroize();
        self.master_secret.zeroize();
    }
}

impl std::fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionKeys")
            .field("suite", &self.suite)
            .finish_non_exhaustive()
    }
}

pub fn transcript_hash(transcript: &[u8]) -> [u8; 32] {
    Sha256::digest(transcript).into()
}

pub fn hkdf_extract(salt: &[u8], ikm: &[u8]) -> Vec<u8> {
    let (prk, _) = Hkdf::<Sha256>::extract(Some(salt), ikm);
    prk.to_vec()
}

pub fn hkdf_expand(prk: &[u8], info: &[u8], len: usize) -> Vec<u8> {
    let hk = Hkdf::<Sha256>::from_prk(prk).expect("prk is one hash length");
    let mut out = vec![0u8; len];
    hk.expand(info, &mut out)
        .expect("output length within 255 hash blocks");
    out
}

/// Extract with salt `client_random || service_random`, then expand each
/// output under `label || transcript_hash`.
pub fn derive_key_schedule(
    suite: CipherSuite,
    shared: &[u8],
    client_random: &RandomNonce,
    service_random: &RandomNonce,
    transcript_hash: &[u8],
) -> SessionKeys {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(client_random.as_bytes());
    salt[32..].copy_from_slice(service_random.as_bytes());
    let master_secret = zeroize::Zeroizing::new(hkdf_extract(&salt, shared));
    let expand = |label: &[u8], len: usize| {
        let mut info = Vec::with_capacity(label.len() + transcript_hash.len());
        info.extend_from_slice(label);
        info.extend_from_slice(transcript_hash);
        hkdf_expand(&master_secret, &info, len)
    };
    let (k, iv) = (suite.key_len(), suite.iv_len());
    SessionKeys {
        suite,
        client_write_key: expand(labels::CLIENT_KEY, k),
        service_write_key: expand(labels::SERVICE_KEY, k),
        client_iv: expand(labels::CLIENT_IV, iv),
        service_iv: expand(labels::SERVICE_IV, iv),
        ticket_key: expand(labels::TICKET, k),
        binder_key: expand(labels::BINDER, k),
        master_secret: master_secret.to_vec(),
    }
}
