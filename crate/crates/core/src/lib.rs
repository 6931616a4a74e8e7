//! Attested, end-to-end protected HTTP transactions.

pub mod attest;
pub mod crypto;
pub mod handshake;
pub mod harness;
pub mod middlebox;
pub mod reason;
pub mod session;
pub mod stack;
pub mod wire;
