use serde::{Deserialize, Serialize};

use crate::attest::{measurement_of, AttestationMode, Quote};
use crate::crypto::{PublicKeyShare, RandomNonce};
use crate::wire::{names, AttestHeaderLine, BareItem, Field, Item, Message, Value};

/// Why a handshake message could not be read.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldError {
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("malformed {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    #[default]
    Strict,
    Lenient,
}

impl ReplayMode {
    pub fn is_strict(self) -> bool {
        self == ReplayMode::Strict
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReplayMode::Strict => "strict",
            ReplayMode::Lenient => "lenient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseCreation {
    #[default]
    New,
    Reuse,
    Shared,
}

impl BaseCreation {
    pub fn as_str(self) -> &'static str {
        match self {
            BaseCreation::New => "new",
            BaseCreation::Reuse => "reuse",
            BaseCreation::Shared => "shared",
        }
    }

    pub fn from_token(t: &str) -> Option<Self> {
        match t {
            "new" => Some(BaseCreation::New),
            "reuse" => Some(BaseCreation::Reuse),
            "shared" => Some(BaseCreation::Shared),
            _ => None,
        }
    }
}

/// `Attest-Policies` content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Policies {
    pub attestation: AttestationMode,
    pub allow_untrusted_req: bool,
    pub replay: ReplayMode,
}

impl Policies {
    fn to_value(self) -> Value {
        Value::Map(vec![
            (
                "attestation".into(),
                Item::token(self.attestation.as_str()),
            ),
            (
                "allowUntrustedReq".into(),
                Item::integer(i64::from(self.allow_untrusted_req)),
            ),
            ("replay".into(), Item::token(self.replay.as_str())),
        ])
    }

    fn from_value(v: &Value) -> Result<Self, FieldError> {
        let bad = || FieldError::Malformed(names::POLICIES.into());
        let mut p = Policies::default();
        for (k, item) in v.as_map().ok_or_else(bad)? {
            match k.as_str() {
                "attestation" => {
                    p.attestation = item
                        .bare
                        .as_token()
                        .and_then(AttestationMode::from_token)
                        .ok_or_else(bad)?
                }
                "allowUntrustedReq" => {
                    p.allow_untrusted_req = match item.bare.as_integer() {
                        Some(0) => false,
                        Some(1) => true,
                        _ => return Err(bad()),
                    }
                }
                "replay" => {
                    p.replay = match item.bare.as_token() {
                        Some("strict") => ReplayMode::Strict,
                        Some("lenient") => ReplayMode::Lenient,
                        _ => return Err(bad()),
                    }
                }
                // unknown directives are carried (and covered by the
                // transcript) but otherwise ignored
                _ => {}
            }
        }
        Ok(p)
    }
}

/// One `Attest-Blocklist` entry: a measurement digest, or an ISV/TEE token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BlockEntry {
    Measurement([u8; 32]),
    Id(String),
}

impl BlockEntry {
    /// Config syntax: 64 hex digits, `code:<label>` (hashed like a service
    /// identity), or a bare token.
    pub fn parse_config(text: &str) -> Self {
        if let Some(label) = text.strip_prefix("code:") {
            return BlockEntry::Measurement(measurement_of(label));
        }
        if text.len() == 64 {
            if let Ok(b) = hex::decode(text) {
                return BlockEntry::Measurement(b.try_into().expect("64 hex digits"));
            }
        }
        BlockEntry::Id(text.to_string())
    }

    fn to_item(&self) -> Item {
        match self {
            BlockEntry::Measurement(m) => Item::bytes(m.to_vec()),
            BlockEntry::Id(t) => Item::token(t.clone()),
        }
    }

    fn from_item(item: &Item) -> Result<Self, FieldError> {
        match &item.bare {
            BareItem::Bytes(b) => b
                .as_slice()
                .try_into()
                .map(BlockEntry::Measurement)
                .map_err(|_| FieldError::Malformed(names::BLOCKLIST.into())),
            BareItem::Token(t) => Ok(BlockEntry::Id(t.clone())),
            BareItem::Integer(_) => Err(FieldError::Malformed(names::BLOCKLIST.into())),
        }
    }
}

/// An `Attest-Signatures` member: Ed25519 signature over the request core
/// transcript, with the public key in the `key` parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSignature {
    pub public_key: [u8; 32],
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AthsRequestFields {
    pub versions: Vec<i64>,
    pub cipher_suites: Vec<String>,
    pub supported_groups: Vec<String>,
    pub key_shares: Vec<PublicKeyShare>,
    pub random: RandomNonce,
    pub policies: Policies,
    pub base_creation: BaseCreation,
    pub blocklist: Vec<BlockEntry>,
    pub date: Option<i64>,
    pub transport: Option<Vec<u8>>,
    pub client_quotes: Vec<Quote>,
    pub signatures: Vec<ClientSignature>,
}

fn line(name: &str, value: Value) -> AttestHeaderLine {
    AttestHeaderLine::new(name, value).expect("field built with its own shape")
}

fn tokens(list: &[String]) -> Value {
    Value::List(list.iter().map(|t| Item::token(t.clone())).collect())
}

impl AthsRequestFields {
    /// Everything a client quote and signature cover: all lines except
    /// `Attest-Quotes` and `Attest-Signatures`.
    pub fn core_lines(&self) -> Vec<AttestHeaderLine> {
        let mut out = vec![
            line(
                names::VERSIONS,
                Value::List(self.versions.iter().map(|v| Item::integer(*v)).collect()),
            ),
            line(names::CIPHER_SUITES, tokens(&self.cipher_suites)),
            line(names::SUPPORTED_GROUPS, tokens(&self.supported_groups)),
            line(
                names::KEY_SHARES,
                Value::Map(
                    self.key_shares
                        .iter()
                        .map(|s| (s.group.clone(), Item::bytes(s.public.clone())))
                        .collect(),
                ),
            ),
            line(
                names::RANDOM,
                Value::Item(Item::bytes(self.random.as_bytes().to_vec())),
            ),
            line(names::POLICIES, self.policies.to_value()),
            line(
                names::BASE_CREATION,
                Value::Item(Item::token(self.base_creation.as_str())),
            ),
        ];
        if !self.blocklist.is_empty() {
            out.push(line(
                names::BLOCKLIST,
                Value::List(self.blocklist.iter().map(BlockEntry::to_item).collect()),
            ));
        }
        if let Some(d) = self.date {
            out.push(line(names::DATE, Value::Item(Item::integer(d))));
        }
        if let Some(t) = &self.transport {
            out.push(line(names::TRANSPORT, Value::Item(Item::bytes(t.clone()))));
        }
        out
    }

    pub fn lines(&self) -> Vec<AttestHeaderLine> {
        let mut out = self.core_lines();
        if !self.client_quotes.is_empty() {
            out.push(line(
                names::QUOTES,
                Value::List(self.client_quotes.iter().map(Quote::to_item).collect()),
            ));
        }
        if !self.signatures.is_empty() {
            out.push(line(
                names::SIGNATURES,
                Value::List(
                    self.signatures
                        .iter()
                        .map(|s| {
                            Item::bytes(s.signature.clone())
                                .with_param("key", BareItem::Bytes(s.public_key.to_vec()))
                        })
                        .collect(),
                ),
            ));
        }
        out
    }

    pub fn from_message(msg: &Message) -> Result<Self, FieldError> {
        let r = Reader::new(msg)?;
        let versions = r
            .required(names::VERSIONS)?
            .as_list()
            .unwrap_or_default()
            .iter()
            .map(|i| i.bare.as_integer())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| FieldError::Malformed(names::VERSIONS.into()))?;
        let cipher_suites = r.token_list(names::CIPHER_SUITES)?;
        let supported_groups = r.token_list(names::SUPPORTED_GROUPS)?;
        let mut key_shares = Vec::new();
        for (group, item) in r.required(names::KEY_SHARES)?.as_map().unwrap_or_default() {
            let public = item
                .bare
                .as_bytes()
                .ok_or_else(|| FieldError::Malformed(names::KEY_SHARES.into()))?;
            if !supported_groups.contains(group) {
                return Err(FieldError::Malformed(format!(
                    "key share for unoffered group {group}"
                )));
            }
            key_shares.push(PublicKeyShare {
                group: group.clone(),
                public: public.to_vec(),
            });
        }
        let random = r.random()?;
        let policies = match r.optional(names::POLICIES)? {
            Some(v) => Policies::from_value(&v)?,
            None => Policies::default(),
        };
        let base_creation = match r.optional(names::BASE_CREATION)? {
            Some(v) => v
                .as_item()
                .and_then(|i| i.bare.as_token())
                .and_then(BaseCreation::from_token)
                .ok_or_else(|| FieldError::Malformed(names::BASE_CREATION.into()))?,
            None => BaseCreation::New,
        };
        let blocklist = match r.optional(names::BLOCKLIST)? {
            Some(v) => v
                .as_list()
                .unwrap_or_default()
                .iter()
                .map(BlockEntry::from_item)
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        let date = r.optional_integer(names::DATE)?;
        let transport = r.optional_bytes(names::TRANSPORT)?;
        let client_quotes = match r.optional(names::QUOTES)? {
            Some(v) => v
                .as_list()
                .unwrap_or_default()
                .iter()
                .map(|i| {
                    Quote::from_item(i).map_err(|e| FieldError::Malformed(e.to_string()))
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        let signatures = match r.optional(names::SIGNATURES)? {
            Some(v) => v
                .as_list()
                .unwrap_or_default()
                .iter()
                .map(|i| {
                    let bad = || FieldError::Malformed(names::SIGNATURES.into());
                    let key = match i.param("key") {
                        Some(BareItem::Bytes(k)) => {
                            <[u8; 32]>::try_from(k.as_slice()).map_err(|_| bad())?
                        }
                        _ => return Err(bad()),
                    };
                    Ok(ClientSignature {
                        public_key: key,
                        signature: i.bare.as_bytes().ok_or_else(bad)?.to_vec(),
                    })
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(AthsRequestFields {
            versions,
            cipher_suites,
            supported_groups,
            key_shares,
            random,
            policies,
            base_creation,
            blocklist,
            date,
            transport,
            client_quotes,
            signatures,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AthsResponseFields {
    pub version: i64,
    pub cipher_suite: String,
    pub supported_group: String,
    pub key_share: Vec<u8>,
    pub random: RandomNonce,
    pub base_id: Vec<u8>,
    pub base_max_age: u64,
    pub expires: i64,
    pub transport: Option<Vec<u8>>,
    pub secrets: Vec<Vec<u8>>,
    pub quotes: Vec<Quote>,
}

impl AthsResponseFields {
    /// Lines covered by the service quote's QUDD: all but `Attest-Quotes`.
    pub fn lines_before_quotes(&self) -> Vec<AttestHeaderLine> {
        let mut out = vec![
            line(names::VERSION, Value::Item(Item::integer(self.version))),
            line(
                names::CIPHER_SUITE,
                Value::Item(Item::token(self.cipher_suite.clone())),
            ),
            line(
                names::SUPPORTED_GROUP,
                Value::Item(Item::token(self.supported_group.clone())),
            ),
            line(
                names::KEY_SHARE,
                Value::Item(Item::bytes(self.key_share.clone())),
            ),
            line(
                names::RANDOM,
                Value::Item(Item::bytes(self.random.as_bytes().to_vec())),
            ),
            line(
                names::BASE_ID,
                Value::Item(Item::bytes(self.base_id.clone()).with_param(
                    "max-age",
                    BareItem::Integer(i64::try_from(self.base_max_age).unwrap_or(i64::MAX)),
                )),
            ),
            line(names::EXPIRES, Value::Item(Item::integer(self.expires))),
        ];
        if let Some(t) = &self.transport {
            out.push(line(names::TRANSPORT, Value::Item(Item::bytes(t.clone()))));
        }
        if !self.secrets.is_empty() {
            out.push(line(
                names::SECRETS,
                Value::List(self.secrets.iter().map(|s| Item::bytes(s.clone())).collect()),
            ));
        }
        out
    }

    pub fn quotes_line(&self) -> AttestHeaderLine {
        line(
            names::QUOTES,
            Value::List(self.quotes.iter().map(Quote::to_item).collect()),
        )
    }

    /// Reads everything except the quotes, which the client handles first.
    pub fn from_message(msg: &Message) -> Result<Self, FieldError> {
        let r = Reader::new(msg)?;
        let item = |name: &'static str| -> Result<Item, FieldError> {
            r.required(name)?
                .as_item()
                .cloned()
                .ok_or_else(|| FieldError::Malformed(name.into()))
        };
        let token = |name: &'static str| -> Result<String, FieldError> {
            item(name)?
                .bare
                .as_token()
                .map(str::to_string)
                .ok_or_else(|| FieldError::Malformed(name.into()))
        };
        let version = item(names::VERSION)?
            .bare
            .as_integer()
            .ok_or_else(|| FieldError::Malformed(names::VERSION.into()))?;
        let key_share = item(names::KEY_SHARE)?
            .bare
            .as_bytes()
            .map(<[u8]>::to_vec)
            .ok_or_else(|| FieldError::Malformed(names::KEY_SHARE.into()))?;
        let base = item(names::BASE_ID)?;
        let base_id = base
            .bare
            .as_bytes()
            .filter(|b| !b.is_empty())
            .map(<[u8]>::to_vec)
            .ok_or_else(|| FieldError::Malformed(names::BASE_ID.into()))?;
        let base_max_age = match base.param("max-age") {
            Some(BareItem::Integer(n)) if *n >= 0 => *n as u64,
            _ => return Err(FieldError::Malformed(names::BASE_ID.into())),
        };
        let expires = item(names::EXPIRES)?
            .bare
            .as_integer()
            .ok_or_else(|| FieldError::Malformed(names::EXPIRES.into()))?;
        let secrets = match r.optional(names::SECRETS)? {
            Some(v) => v
                .as_list()
                .unwrap_or_default()
                .iter()
                .map(|i| i.bare.as_bytes().map(<[u8]>::to_vec))
                .collect::<Option<_>>()
                .ok_or_else(|| FieldError::Malformed(names::SECRETS.into()))?,
            None => Vec::new(),
        };
        Ok(AthsResponseFields {
            version,
            cipher_suite: token(names::CIPHER_SUITE)?,
            supported_group: token(names::SUPPORTED_GROUP)?,
            key_share,
            random: r.random()?,
            base_id,
            base_max_age,
            expires,
            transport: r.optional_bytes(names::TRANSPORT)?,
            secrets,
            quotes: Vec::new(),
        })
    }
}

/// Parses quotes from the single `Attest-Quotes` field of a message.
pub fn read_quotes(msg: &Message) -> Result<Vec<Quote>, FieldError> {
    let r = Reader::new(msg)?;
    let v = r.required(names::QUOTES)?;
    v.as_list()
        .unwrap_or_default()
        .iter()
        .map(|i| Quote::from_item(i).map_err(|e| FieldError::Malformed(e.to_string())))
        .collect()
}

/// Lookup over a message's `Attest-*` header fields. Every protocol field
/// may appear at most once.
struct Reader<'a> {
    fields: Vec<&'a Field>,
}

impl<'a> Reader<'a> {
    fn new(msg: &'a Message) -> Result<Self, FieldError> {
        let fields: Vec<&Field> = crate::wire::attest_fields(msg).collect();
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.is_named(&f.name)) {
                return Err(FieldError::Malformed(format!("duplicate {}", f.name)));
            }
        }
        Ok(Reader { fields })
    }

    fn optional(&self, name: &'static str) -> Result<Option<Value>, FieldError> {
        match self.fields.iter().find(|f| f.is_named(name)) {
            None => Ok(None),
            Some(f) => AttestHeaderLine::from_field(f)
                .map(|l| Some(l.value().clone()))
                .map_err(|_| FieldError::Malformed(name.into())),
        }
    }

    fn required(&self, name: &'static str) -> Result<Value, FieldError> {
        self.optional(name)?.ok_or(FieldError::Missing(name))
    }

    fn token_list(&self, name: &'static str) -> Result<Vec<String>, FieldError> {
        self.required(name)?
            .as_list()
            .unwrap_or_default()
            .iter()
            .map(|i| i.bare.as_token().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| FieldError::Malformed(name.into()))
    }

    fn random(&self) -> Result<RandomNonce, FieldError> {
        self.required(names::RANDOM)?
            .as_item()
            .and_then(|i| i.bare.as_bytes())
            .and_then(|b| RandomNonce::from_slice(b).ok())
            .ok_or_else(|| FieldError::Malformed(names::RANDOM.into()))
    }

    fn optional_integer(&self, name: &'static str) -> Result<Option<i64>, FieldError> {
        self.optional(name)?
            .map(|v| {
                v.as_item()
                    .and_then(|i| i.bare.as_integer())
                    .ok_or_else(|| FieldError::Malformed(name.into()))
            })
            .transpose()
    }

    fn optional_bytes(&self, name: &'static str) -> Result<Option<Vec<u8>>, FieldError> {
        self.optional(name)?
            .map(|v| {
                v.as_item()
                    .and_then(|i| i.bare.as_bytes())
                    .map(<[u8]>::to_vec)
                    .ok_or_else(|| FieldError::Malformed(name.into()))
            })
            .transpose()
    }
}
