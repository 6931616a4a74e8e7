use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};

use super::AttestError;
use crate::crypto::ProtocolRng;
use crate::wire::{b64_decode, b64_encode, BareItem, Item};

pub const MOCK_QUOTE_TYPE: &str = "mock-v1";

/// Code/ISV/TEE identity of an attested instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    #[serde(with = "hex32")]
    pub measurement: [u8; 32],
    pub isv_id: String,
    pub tee_id: String,
    pub svn: u64,
}

impl Identity {
    /// Measurement is the SHA-256 of a code label, which keeps configs readable.
    pub fn for_code(code: &str, isv_id: &str, tee_id: &str, svn: u64) -> Self {
        Identity {
            measurement: measurement_of(code),
            isv_id: isv_id.to_string(),
            tee_id: tee_id.to_string(),
            svn,
        }
    }
}

pub fn measurement_of(code: &str) -> [u8; 32] {
    use sha2::Digest;
    sha2::Sha256::digest(code.as_bytes()).into()
}

#[derive(Clone, PartialEq, Eq)]
pub struct Quote {
    pub quote_type: String,
    pub measurement: [u8; 32],
    pub isv_id: String,
    pub tee_id: String,
    pub svn: u64,
    pub qudd: [u8; 32],
    pub nonce: Vec<u8>,
    pub signature: Vec<u8>,
}

impl std::fmt::Debug for Quote {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Quote")
            .field("quote_type", &self.quote_type)
            .field("measurement", &hex::encode(self.measurement))
            .field("isv_id", &self.isv_id)
            .field("tee_id", &self.tee_id)
            .field("svn", &self.svn)
            .field("qudd", &hex::encode(self.qudd))
            .finish_non_exhaustive()
    }
}

fn put(out: &mut Vec<u8>, field: &[u8]) {
    let len = u16::try_from(field.len()).expect("quote field over 64 KiB");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(field);
}

impl Quote {
    /// Length-prefixed encoding of every field except the signature; this is
    /// what gets signed.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put(&mut out, self.quote_type.as_bytes());
        put(&mut out, &self.measurement);
        put(&mut out, self.isv_id.as_bytes());
        put(&mut out, self.tee_id.as_bytes());
        put(&mut out, &self.svn.to_be_bytes());
        put(&mut out, &self.qudd);
        put(&mut out, &self.nonce);
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        put(&mut out, &self.signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Quote, AttestError> {
        let mut rest = bytes;
        let mut fields: Vec<&[u8]> = Vec::with_capacity(8);
        while !rest.is_empty() {
            if rest.len() < 2 {
                return Err(AttestError::MalformedQuote("truncated length".into()));
            }
            let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
            if rest.len() < 2 + len {
                return Err(AttestError::MalformedQuote("truncated field".into()));
            }
            fields.push(&rest[2..2 + len]);
            rest = &rest[2 + len..];
        }
        let [qt, meas, isv, tee, svn, qudd, nonce, sig] = fields[..] else {
            return Err(AttestError::MalformedQuote(format!(
                "expected 8 fields, got {}",
                fields.len()
            )));
        };
        let text = |b: &[u8], what: &str| {
            String::from_utf8(b.to_vec())
                .map_err(|_| AttestError::MalformedQuote(format!("{what} is not UTF-8")))
        };
        let fixed = |b: &[u8], what: &str| -> Result<[u8; 32], AttestError> {
            b.try_into()
                .map_err(|_| AttestError::MalformedQuote(format!("{what} must be 32 bytes")))
        };
        let svn: [u8; 8] = svn
            .try_into()
            .map_err(|_| AttestError::MalformedQuote("svn must be 8 bytes".into()))?;
        Ok(Quote {
            quote_type: text(qt, "quote type")?,
            measurement: fixed(meas, "measurement")?,
            isv_id: text(isv, "isv id")?,
            tee_id: text(tee, "tee id")?,
            svn: u64::from_be_bytes(svn),
            qudd: fixed(qudd, "qudd")?,
            nonce: nonce.to_vec(),
            signature: sig.to_vec(),
        })
    }

    /// `Attest-Quotes` list member: `:<b64>:;type=<quote_type>`.
    pub fn to_item(&self) -> Item {
        Item::bytes(self.encode()).with_param("type", BareItem::token(self.quote_type.clone()))
    }

    /// Inverse of `to_item`. The `type` parameter must match the encoded type;
    /// `max-age` is the only other parameter allowed.
    pub fn from_item(item: &Item) -> Result<Quote, AttestError> {
        let bytes = item
            .bare
            .as_bytes()
            .ok_or_else(|| AttestError::MalformedQuote("quote is not a byte sequence".into()))?;
        let quote = Quote::decode(bytes)?;
        let mut saw_type = false;
        for (k, v) in &item.params {
            match (k.as_str(), v) {
                ("type", BareItem::Token(t)) if *t == quote.quote_type && !saw_type => {
                    saw_type = true
                }
                ("max-age", BareItem::Integer(n)) if *n >= 0 => {}
                _ => {
                    return Err(AttestError::MalformedQuote(format!(
                        "unexpected quote parameter {k}"
                    )))
                }
            }
        }
        if !saw_type {
            return Err(AttestError::MalformedQuote("missing type parameter".into()));
        }
        Ok(quote)
    }
}

/// Public verification key for one quote type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustAnchor {
    pub quote_type: String,
    #[serde(with = "hex32")]
    pub public_key: [u8; 32],
}

/// The mock quoting service: holds the attestation key and signs quotes for
/// any identity it is asked to vouch for.
pub struct QService {
    key: SigningKey,
}

/// Seed of the well-known mock root used when no other key is configured.
const MOCK_ROOT_SEED: [u8; 32] = *b"httpa2 mock quoting service root";

impl QService {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        QService {
            key: SigningKey::from_bytes(&seed),
        }
    }

    pub fn generate(rng: &ProtocolRng) -> Self {
        QService::from_seed(rng.array())
    }

    pub fn mock_root() -> Self {
        QService::from_seed(MOCK_ROOT_SEED)
    }

    pub fn anchor(&self) -> TrustAnchor {
        TrustAnchor {
            quote_type: MOCK_QUOTE_TYPE.to_string(),
            public_key: self.key.verifying_key().to_bytes(),
        }
    }

    pub fn generate_quote(&self, identity: &Identity, qudd: [u8; 32], nonce: &[u8]) -> Quote {
        let mut quote = Quote {
            quote_type: MOCK_QUOTE_TYPE.to_string(),
            measurement: identity.measurement,
            isv_id: identity.isv_id.clone(),
            tee_id: identity.tee_id.clone(),
            svn: identity.svn,
            qudd,
            nonce: nonce.to_vec(),
            signature: Vec::new(),
        };
        quote.signature = self.key.sign(&quote.signed_bytes()).to_bytes().to_vec();
        quote
    }
}

impl std::fmt::Debug for QService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QService")
            .field("anchor", &hex::encode(self.key.verifying_key().to_bytes()))
            .finish_non_exhaustive()
    }
}

pub(crate) fn verify_ed25519(public: &[u8; 32], msg: &[u8], sig: &[u8]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(sig) else {
        return false;
    };
    key.verify_strict(msg, &sig).is_ok()
}

/// Quote bytes inside a b64 string, for logs.
pub fn quote_b64(q: &Quote) -> String {
    b64_encode(&q.encode())
}

pub fn quote_from_b64(text: &str) -> Result<Quote, AttestError> {
    let bytes = b64_decode(text).map_err(|e| AttestError::MalformedQuote(e.to_string()))?;
    Quote::decode(&bytes)
}

pub(crate) mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 hex-encoded bytes"))
    }
}
