//! HTTP/1.1 message model, codec, `Attest-*` header lines and request
//! classification.
//!
//! Intermediaries are assumed not to reorder `Attest-*` lines: transcripts
//! preserve sender order, so a reordering is indistinguishable from tampering.

mod ahl;
mod classify;
mod codec;
mod message;
pub mod sfv;

pub use ahl::{
    attest_fields, canonical_name, canonical_transcript, is_attest_name, names, shape_of,
    transcript_of_fields, AttestHeaderLine,
};
pub use classify::{classify_request, RequestClass, ATTEST_METHOD};
pub use codec::{
    parse_message, parse_message_with, parse_prefix, read_message, serialize_message,
    serialize_with, write_message, Framing, Limits, DEFAULT_MAX_BODY_BYTES,
    DEFAULT_MAX_HEADER_BYTES,
};
pub use message::{Field, Message, StartLine, FRAMING_FIELDS};
pub use sfv::{b64_decode, b64_encode, BareItem, Item, Shape, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("{part} exceeds the {limit}-byte cap")]
    OversizeMessage { part: &'static str, limit: usize },
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("ATTEST request carries neither Attest-Cipher-Suites nor Attest-Base-ID")]
    AmbiguousRequest,
    #[error("malformed structured value: {0}")]
    MalformedValue(String),
    #[error("{0} is not an Attest-* field")]
    NotAttestField(String),
    #[error("i/o: {0}")]
    Io(String),
}
