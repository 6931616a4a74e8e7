use super::ahl::{is_attest_name, names};
use super::message::Message;
use super::WireError;

pub const ATTEST_METHOD: &str = "ATTEST";

/// The three request types, with the attest request split by transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestClass {
    /// Plain HTTP: no ATTEST method and no `Attest-*` fields.
    Utr,
    /// ATTEST carrying `Attest-Cipher-Suites`: the handshake.
    AtrAths,
    /// ATTEST carrying `Attest-Base-ID`: secret provisioning.
    AtrAtsp,
    /// Ordinary method with at least one `Attest-*` field.
    Trr,
}

impl RequestClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestClass::Utr => "utr",
            RequestClass::AtrAths => "atr-aths",
            RequestClass::AtrAtsp => "atr-atsp",
            RequestClass::Trr => "trr",
        }
    }
}

pub fn classify_request(msg: &Message) -> Result<RequestClass, WireError> {
    let method = msg
        .method()
        .ok_or_else(|| WireError::InvalidMessage("cannot classify a response".into()))?;
    if method == ATTEST_METHOD {
        if msg.has_field(names::CIPHER_SUITES) {
            Ok(RequestClass::AtrAths)
        } else if msg.has_field(names::BASE_ID) {
            Ok(RequestClass::AtrAtsp)
        } else {
            Err(WireError::AmbiguousRequest)
        }
    } else if msg.all_fields().any(|f| is_attest_name(&f.name)) {
        Ok(RequestClass::Trr)
    } else {
        Ok(RequestClass::Utr)
    }
}
