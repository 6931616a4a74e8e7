use std::fmt;

use super::CryptoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aead {
    Aes128Gcm,
    ChaCha20Poly1305,
}

/// AEAD/HKDF-hash pair. Both registered suites use SHA-256 for the key schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CipherSuite {
    Aes128GcmSha256,
    ChaCha20Poly1305Sha256,
}

impl CipherSuite {
    pub const ALL: [CipherSuite; 2] = [
        CipherSuite::Aes128GcmSha256,
        CipherSuite::ChaCha20Poly1305Sha256,
    ];

    pub fn id(self) -> &'static str {
        match self {
            CipherSuite::Aes128GcmSha256 => "HTTPA-AES128GCM-SHA256",
            CipherSuite::ChaCha20Poly1305Sha256 => "HTTPA-CHACHA20POLY1305-SHA256",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.id() == id)
    }

    pub fn aead(self) -> Aead {
        match self {
            CipherSuite::Aes128GcmSha256 => Aead::Aes128Gcm,
            CipherSuite::ChaCha20Poly1305Sha256 => Aead::ChaCha20Poly1305,
        }
    }

    pub fn hash_len(self) -> usize {
        32
    }

    pub fn key_len(self) -> usize {
        match self {
            CipherSuite::Aes128GcmSha256 => 16,
            CipherSuite::ChaCha20Poly1305Sha256 => 32,
        }
    }

    pub fn iv_len(self) -> usize {
        12
    }

    pub fn tag_len(self) -> usize {
        16
    }
}

impl fmt::Display for CipherSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedGroup {
    X25519,
    Secp256r1,
}

impl NamedGroup {
    pub const ALL: [NamedGroup; 2] = [NamedGroup::X25519, NamedGroup::Secp256r1];

    pub fn id(self) -> &'static str {
        match self {
            NamedGroup::X25519 => "x25519",
            NamedGroup::Secp256r1 => "secp256r1",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.id() == id)
    }

    /// Length of the public key share on the wire.
    pub fn share_len(self) -> usize {
        match self {
            NamedGroup::X25519 => 32,
            NamedGroup::Secp256r1 => 65,
        }
    }
}

impl fmt::Display for NamedGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// First client-preferred suite the service supports. Unknown client tokens
/// are skipped.
pub fn negotiate_suite<S: AsRef<str>>(
    client: &[S],
    service: &[CipherSuite],
) -> Result<CipherSuite, CryptoError> {
    client
        .iter()
        .filter_map(|id| CipherSuite::from_id(id.as_ref()))
        .find(|s| service.contains(s))
        .ok_or(CryptoError::NoCommonSuite)
}

pub fn negotiate_group<S: AsRef<str>>(
    client: &[S],
    service: &[NamedGroup],
) -> Result<NamedGroup, CryptoError> {
    client
        .iter()
        .filter_map(|id| NamedGroup::from_id(id.as_ref()))
        .find(|g| service.contains(g))
        .ok_or(CryptoError::NoCommonGroup)
}

pub fn negotiate<S: AsRef<str>, G: AsRef<str>>(
    client_suites: &[S],
    client_groups: &[G],
    service_suites: &[CipherSuite],
    service_groups: &[NamedGroup],
) -> Result<(CipherSuite, NamedGroup), CryptoError> {
    Ok((
        negotiate_suite(client_suites, service_suites)?,
        negotiate_group(client_groups, service_groups)?,
    ))
}
