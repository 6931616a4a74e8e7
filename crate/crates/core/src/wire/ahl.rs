use super::message::{Field, Message};
use super::sfv::{Shape, Value};
use super::WireError;

/// Canonical `Attest-*` field names.
pub mod names {
    pub const VERSIONS: &str = "Attest-Versions";
    pub const VERSION: &str = "Attest-Version";
    pub const CIPHER_SUITES: &str = "Attest-Cipher-Suites";
    pub const CIPHER_SUITE: &str = "Attest-Cipher-Suite";
    pub const SUPPORTED_GROUPS: &str = "Attest-Supported-Groups";
    pub const SUPPORTED_GROUP: &str = "Attest-Supported-Group";
    pub const KEY_SHARES: &str = "Attest-Key-Shares";
    pub const KEY_SHARE: &str = "Attest-Key-Share";
    pub const RANDOM: &str = "Attest-Random";
    pub const POLICIES: &str = "Attest-Policies";
    pub const BASE_CREATION: &str = "Attest-Base-Creation";
    pub const BLOCKLIST: &str = "Attest-Blocklist";
    pub const DATE: &str = "Attest-Date";
    pub const QUOTES: &str = "Attest-Quotes";
    pub const SIGNATURES: &str = "Attest-Signatures";
    pub const TRANSPORT: &str = "Attest-Transport";
    pub const BASE_ID: &str = "Attest-Base-ID";
    pub const EXPIRES: &str = "Attest-Expires";
    pub const SECRETS: &str = "Attest-Secrets";
    pub const CARGO: &str = "Attest-Cargo";
    pub const TICKET: &str = "Attest-Ticket";
    pub const BINDER: &str = "Attest-Binder";
    pub const BASE_TERMINATION: &str = "Attest-Base-Termination";

    pub const ALL: [&str; 23] = [
        VERSIONS,
        VERSION,
        CIPHER_SUITES,
        CIPHER_SUITE,
        SUPPORTED_GROUPS,
        SUPPORTED_GROUP,
        KEY_SHARES,
        KEY_SHARE,
        RANDOM,
        POLICIES,
        BASE_CREATION,
        BLOCKLIST,
        DATE,
        QUOTES,
        SIGNATURES,
        TRANSPORT,
        BASE_ID,
        EXPIRES,
        SECRETS,
        CARGO,
        TICKET,
        BINDER,
        BASE_TERMINATION,
    ];
}

pub fn is_attest_name(name: &str) -> bool {
    name.len() >= 7 && name[..7].eq_ignore_ascii_case("attest-")
}

/// Known names map to their canonical capitalization; others pass through.
pub fn canonical_name(name: &str) -> String {
    names::ALL
        .iter()
        .find(|n| n.eq_ignore_ascii_case(name))
        .map(|n| n.to_string())
        .unwrap_or_else(|| name.to_string())
}

/// Grammar used by each field. List-valued fields and unknown `Attest-*`
/// fields are read as lists.
pub fn shape_of(name: &str) -> Shape {
    use names::*;
    const MAPS: [&str; 2] = [KEY_SHARES, POLICIES];
    const ITEMS: [&str; 14] = [
        VERSION,
        CIPHER_SUITE,
        SUPPORTED_GROUP,
        KEY_SHARE,
        RANDOM,
        BASE_CREATION,
        DATE,
        TRANSPORT,
        BASE_ID,
        EXPIRES,
        CARGO,
        TICKET,
        BINDER,
        BASE_TERMINATION,
    ];
    if MAPS.iter().any(|n| n.eq_ignore_ascii_case(name)) {
        Shape::Map
    } else if ITEMS.iter().any(|n| n.eq_ignore_ascii_case(name)) {
        Shape::Item
    } else {
        Shape::List
    }
}

/// An `Attest-*` field name with its structured value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttestHeaderLine {
    name: String,
    value: Value,
}

impl AttestHeaderLine {
    pub fn new(name: &str, value: Value) -> Result<Self, WireError> {
        if !is_attest_name(name) || !name.bytes().all(super::message::is_tchar) {
            return Err(WireError::NotAttestField(name.to_string()));
        }
        value.check()?;
        let expected = shape_of(name);
        if value.shape() != expected {
            return Err(WireError::MalformedValue(format!(
                "{name} expects a {expected:?} value"
            )));
        }
        Ok(AttestHeaderLine {
            name: canonical_name(name),
            value,
        })
    }

    pub fn parse(name: &str, raw: &[u8]) -> Result<Self, WireError> {
        if !is_attest_name(name) {
            return Err(WireError::NotAttestField(name.to_string()));
        }
        let text = std::str::from_utf8(raw)
            .map_err(|_| WireError::MalformedValue(format!("{name} is not UTF-8")))?;
        let value = Value::parse(text, shape_of(name))?;
        AttestHeaderLine::new(name, value)
    }

    pub fn from_field(field: &Field) -> Result<Self, WireError> {
        AttestHeaderLine::parse(&field.name, &field.value)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    pub fn is(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name)
    }

    pub fn to_field(&self) -> Field {
        Field::new(self.name.clone(), self.value.serialize().into_bytes())
    }
}

/// Deterministic pre-hash encoding of an ordered AHL list: for each line,
/// `lowercase(name) ":" canonical-value "\n"`.
pub fn canonical_transcript(ahls: &[AttestHeaderLine]) -> Vec<u8> {
    let mut out = Vec::new();
    for ahl in ahls {
        push_line(&mut out, &ahl.name, ahl.value.serialize().as_bytes());
    }
    out
}

/// Transcript over raw received fields. Values that parse are
/// canonicalized; values that do not are carried verbatim, so a mangled field
/// still contributes distinct bytes instead of vanishing.
pub fn transcript_of_fields<'a>(fields: impl IntoIterator<Item = &'a Field>) -> Vec<u8> {
    let mut out = Vec::new();
    for f in fields {
        if !is_attest_name(&f.name) {
            continue;
        }
        match AttestHeaderLine::from_field(f) {
            Ok(ahl) => push_line(&mut out, &ahl.name, ahl.value.serialize().as_bytes()),
            Err(_) => push_line(&mut out, &f.name, &f.value),
        }
    }
    out
}

/// All `Attest-*` fields of a message, headers first, then trailers.
pub fn attest_fields(msg: &Message) -> impl Iterator<Item = &Field> {
    msg.all_fields().filter(|f| is_attest_name(&f.name))
}

fn push_line(out: &mut Vec<u8>, name: &str, value: &[u8]) {
    out.extend(name.bytes().map(|b| b.to_ascii_lowercase()));
    out.push(b':');
    out.extend_from_slice(value);
    out.push(b'\n');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::sfv::Item;

    fn random_line(bytes: &[u8]) -> AttestHeaderLine {
        AttestHeaderLine::new(names::RANDOM, Value::Item(Item::bytes(bytes.to_vec()))).unwrap()
    }

    #[test]
    fn empty_transcript() {
        assert!(canonical_transcript(&[]).is_empty());
    }

    #[test]
    fn order_sensitive() {
        let a = random_line(&[1; 32]);
        let b = AttestHeaderLine::new(names::DATE, Value::Item(Item::integer(5))).unwrap();
        assert_ne!(
            canonical_transcript(&[a.clone(), b.clone()]),
            canonical_transcript(&[b, a])
        );
    }

    #[test]
    fn names_canonicalize() {
        let l = AttestHeaderLine::parse("attest-key-shares", b"x25519=:AAAA:").unwrap();
        assert_eq!(l.name(), "Attest-Key-Shares");
        assert!(AttestHeaderLine::parse("X-Attest", b"1").is_err());
        assert!(AttestHeaderLine::new(names::RANDOM, Value::List(vec![])).is_err());
    }

    #[test]
    fn raw_fallback_for_unparseable_values() {
        let good = Field::new("Attest-Date", "12");
        let bad = Field::new("Attest-Date", "12 garbage");
        assert_eq!(transcript_of_fields([&good]), b"attest-date:12\n");
        assert_eq!(transcript_of_fields([&bad]), b"attest-date:12 garbage\n");
        let other = Field::new("Host", "x");
        assert!(transcript_of_fields([&other]).is_empty());
    }
}
