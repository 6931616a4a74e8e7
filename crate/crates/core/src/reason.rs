//! Rejection reason tokens shared by endpoints, logs and scenario files.

pub const QUDD_MISMATCH: &str = "qudd-mismatch";
pub const NONCE_MISMATCH: &str = "nonce-mismatch";
pub const BAD_SIGNATURE: &str = "bad-signature";
pub const BAD_QUOTE: &str = "bad-quote";
pub const UNKNOWN_QUOTE_TYPE: &str = "unknown-quote-type";
pub const SVN_BELOW_MINIMUM: &str = "svn-below-minimum";
pub const UNKNOWN_MEASUREMENT: &str = "unknown-measurement";
pub const UNKNOWN_ISV: &str = "unknown-isv";
pub const MISSING_FIELD: &str = "missing-field";
pub const NEGOTIATION_MISMATCH: &str = "negotiation-mismatch";
pub const MALFORMED_RESPONSE: &str = "malformed-response";
pub const INVALID_KEY_SHARE: &str = "invalid-key-share";

pub const BAD_MAC: &str = "bad-mac";
pub const REPLAY: &str = "replay";
pub const MISSING_TICKET: &str = "missing-ticket";
pub const BAD_BINDER: &str = "bad-binder";
pub const MISSING_BINDER: &str = "missing-binder";
pub const AEAD_FAILURE: &str = "aead-failure";
pub const MALFORMED_CARGO: &str = "malformed-cargo";
pub const UNKNOWN_KEY_INDEX: &str = "unknown-key-index";
pub const SECRET_REJECTED: &str = "secret-rejected";

pub const UNKNOWN_BASE: &str = "unknown-base";
pub const EXPIRED_BASE: &str = "expired-base";
pub const TERMINATED_BASE: &str = "terminated-base";
pub const UNKNOWN_ROUTE: &str = "unknown-route";
pub const UNTRUSTED_DISABLED: &str = "untrusted-disabled";
pub const NEGOTIATION_FAILURE: &str = "negotiation-failure";
pub const MALFORMED_HANDSHAKE: &str = "malformed-handshake";
pub const CLIENT_QUOTE_REJECTED: &str = "client-quote-rejected";
pub const CLIENT_SIGNATURE_REJECTED: &str = "client-signature-rejected";
pub const RESOURCE_EXHAUSTED: &str = "resource-exhausted";
pub const MALFORMED_REQUEST: &str = "malformed-request";

pub const PREFLIGHT_REJECTED: &str = "preflight-rejected";
pub const ABORTED: &str = "aborted";
pub const NO_SESSION: &str = "no-session";
pub const TRANSPORT_ERROR: &str = "transport-error";

/// Client-side verdict for a non-2xx answer it could not otherwise explain.
pub fn status(code: u16) -> String {
    format!("status-{code}")
}
