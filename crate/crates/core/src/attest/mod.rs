//! Mock attestation: quote format, quoting service, verifier and appraisal.

mod quote;
mod verify;

pub use quote::{
    measurement_of, quote_b64, quote_from_b64, Identity, QService, Quote, TrustAnchor,
    MOCK_QUOTE_TYPE,
};
pub(crate) use quote::verify_ed25519;
pub use verify::{
    appraise, appraise_quotes, compute_qudd, verify_quote, Appraisal, AppraisalPolicy,
    AttestationMode, VerificationReport,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttestError {
    #[error("no trust anchor for quote type {0}")]
    UnknownQuoteType(String),
    #[error("malformed quote: {0}")]
    MalformedQuote(String),
}
