use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::quote::{verify_ed25519, Quote, TrustAnchor};
use super::AttestError;
use crate::reason;

pub fn compute_qudd(request_transcript: &[u8], response_transcript: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(request_transcript);
    h.update([0u8]);
    h.update(response_transcript);
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub signature_valid: bool,
    pub issues: Vec<String>,
    pub verified_qudd: [u8; 32],
}

/// Signature and structure check only; policy is applied by `appraise`.
pub fn verify_quote(quote: &Quote, anchors: &[TrustAnchor]) -> Result<VerificationReport, AttestError> {
    let anchor = anchors
        .iter()
        .find(|a| a.quote_type == quote.quote_type)
        .ok_or_else(|| AttestError::UnknownQuoteType(quote.quote_type.clone()))?;
    let signature_valid =
        verify_ed25519(&anchor.public_key, &quote.signed_bytes(), &quote.signature);
    let issues = if signature_valid {
        Vec::new()
    } else {
        vec![reason::BAD_SIGNATURE.to_string()]
    };
    Ok(VerificationReport {
        signature_valid,
        issues,
        verified_qudd: quote.qudd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttestationMode {
    /// Every presented quote must pass.
    #[default]
    Direct,
    /// Only the contact instance (first quote) is checked.
    Indirect,
}

impl AttestationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttestationMode::Direct => "direct",
            AttestationMode::Indirect => "indirect",
        }
    }

    pub fn from_token(t: &str) -> Option<Self> {
        match t {
            "direct" => Some(AttestationMode::Direct),
            "indirect" => Some(AttestationMode::Indirect),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppraisalPolicy {
    pub min_svn: u64,
    /// Hex digests; empty allows any measurement.
    pub allowed_measurements: Vec<String>,
    pub require_known_isv: bool,
    pub known_isvs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Appraisal {
    Accept,
    Reject(&'static str),
}

impl Appraisal {
    pub fn is_accept(&self) -> bool {
        matches!(self, Appraisal::Accept)
    }
}

pub fn appraise(
    report: &VerificationReport,
    quote: &Quote,
    policy: &AppraisalPolicy,
    expected_qudd: &[u8; 32],
    expected_nonce: &[u8],
) -> Appraisal {
    if !report.signature_valid {
        return Appraisal::Reject(reason::BAD_SIGNATURE);
    }
    if quote.qudd != *expected_qudd {
        return Appraisal::Reject(reason::QUDD_MISMATCH);
    }
    if quote.nonce != expected_nonce {
        return Appraisal::Reject(reason::NONCE_MISMATCH);
    }
    if quote.svn < policy.min_svn {
        return Appraisal::Reject(reason::SVN_BELOW_MINIMUM);
    }
    if !policy.allowed_measurements.is_empty() {
        let m = hex::encode(quote.measurement);
        if !policy
            .allowed_measurements
            .iter()
            .any(|a| a.eq_ignore_ascii_case(&m))
        {
            return Appraisal::Reject(reason::UNKNOWN_MEASUREMENT);
        }
    }
    if policy.require_known_isv && !policy.known_isvs.contains(&quote.isv_id) {
        return Appraisal::Reject(reason::UNKNOWN_ISV);
    }
    Appraisal::Accept
}

/// Verifies and appraises the quotes an attest base presents. `quotes[0]` is
/// the contact instance.
pub fn appraise_quotes(
    quotes: &[Quote],
    anchors: &[TrustAnchor],
    policy: &AppraisalPolicy,
    mode: AttestationMode,
    expected_qudd: &[u8; 32],
    expected_nonce: &[u8],
) -> Appraisal {
    let considered = match mode {
        AttestationMode::Direct => quotes,
        AttestationMode::Indirect => &quotes[..quotes.len().min(1)],
    };
    if considered.is_empty() {
        return Appraisal::Reject(reason::MISSING_FIELD);
    }
    for q in considered {
        let report = match verify_quote(q, anchors) {
            Ok(r) => r,
            Err(_) => return Appraisal::Reject(reason::UNKNOWN_QUOTE_TYPE),
        };
        let verdict = appraise(&report, q, policy, expected_qudd, expected_nonce);
        if !verdict.is_accept() {
            return verdict;
        }
    }
    Appraisal::Accept
}
