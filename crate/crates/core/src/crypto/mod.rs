//! Cipher-suite registry, (EC)DHE key exchange, HKDF key schedule, AEAD with
//! sequence-derived nonces, replay counters and length padding.

pub mod aead;
mod kx;
mod padding;
mod replay;
mod rng;
mod schedule;
mod suite;

pub use aead::{open, seal, sequence_nonce};
pub use kx::{
    derive_shared_secret, generate_key_share, generate_key_share_for, KeyShare, PublicKeyShare,
};
pub use padding::{pad, unpad};
pub use replay::{accept_sequential_nonce, ReplayVerdict, SequenceCounter};
pub use rng::ProtocolRng;
pub use schedule::{
    derive_key_schedule, hkdf_expand, hkdf_extract, labels, transcript_hash, RandomNonce,
    SessionKeys,
};
pub use suite::{negotiate, negotiate_group, negotiate_suite, CipherSuite, NamedGroup};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("no cipher suite in common")]
    NoCommonSuite,
    #[error("no named group in common")]
    NoCommonGroup,
    #[error("unsupported group {0}")]
    UnsupportedGroup(String),
    #[error("invalid peer key share: {0}")]
    InvalidPeerShare(&'static str),
    #[error("AEAD authentication failed")]
    AuthenticationFailure,
    #[error("sequence space exhausted")]
    NonceExhausted,
    #[error("malformed padding")]
    MalformedPadding,
    #[error("padding block must be at least 1")]
    InvalidPaddingBlock,
    #[error("{what} must be {expected} bytes, got {got}")]
    BadLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}
