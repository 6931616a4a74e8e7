use zeroize::Zeroizing;

use super::cargo::{open_cargo, seal_cargo, CargoContext, CargoError, Region};
use super::keys::Direction;
use super::secrets::wrap_secrets;
use super::ticket::{attach_ticket, validate_binder, Ticket};
use crate::attest::Quote;
use crate::crypto::{CipherSuite, CryptoError, NamedGroup, SequenceCounter, SessionKeys};
use crate::handshake::{Policies, TerminationMethod};
use crate::reason;
use crate::wire::{
    attest_fields, names, AttestHeaderLine, Field, Item, Message, RequestClass, Value,
    ATTEST_METHOD,
};

/// Client half of an established session.
pub struct ClientSession {
    pub base_id: Vec<u8>,
    pub keys: SessionKeys,
    pub version: i64,
    pub group: NamedGroup,
    pub policies: Policies,
    pub max_age: u64,
    pub expires_at: i64,
    pub quotes: Vec<Quote>,
    /// Secrets delivered by the service in the handshake response.
    pub service_secrets: Vec<Zeroizing<Vec<u8>>>,
    /// Secrets this client has provisioned, by index.
    provisioned: Vec<Zeroizing<Vec<u8>>>,
    send_counter: SequenceCounter,
    pub padding_block: usize,
    pub host: String,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("base_id", &crate::wire::b64_encode(&self.base_id))
            .field("suite", &self.keys.suite)
            .field("group", &self.group)
            .field("sent", &self.send_counter.last())
            .finish_non_exhaustive()
    }
}

/// What the client must remember between sending a protected request and
/// reading its response.
#[derive(Debug, Clone)]
pub struct PendingRequest {
    pub class: RequestClass,
    pub ticket: Ticket,
    provision: Vec<Zeroizing<Vec<u8>>>,
}

/// A TrR as the application describes it, before protection.
#[derive(Debug, Clone, Default)]
pub struct TrrSpec {
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub regions: Vec<Region>,
    pub termination: Option<TerminationMethod>,
}

/// A verified response.
#[derive(Debug, Clone)]
pub struct ResponseView {
    pub status: u16,
    pub headers: Vec<Field>,
    pub body: Vec<u8>,
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Cargo(#[from] CargoError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

pub(crate) struct Established {
    pub base_id: Vec<u8>,
    pub keys: SessionKeys,
    pub version: i64,
    pub group: NamedGroup,
    pub policies: Policies,
    pub max_age: u64,
    pub expires_at: i64,
    pub quotes: Vec<Quote>,
    pub service_secrets: Vec<Zeroizing<Vec<u8>>>,
    pub host: String,
}

impl ClientSession {
    pub(crate) fn new(e: Established) -> Self {
        ClientSession {
            base_id: e.base_id,
            keys: e.keys,
            version: e.version,
            group: e.group,
            policies: e.policies,
            max_age: e.max_age,
            expires_at: e.expires_at,
            quotes: e.quotes,
            service_secrets: e.service_secrets,
            provisioned: Vec::new(),
            send_counter: SequenceCounter::new(),
            padding_block: 0,
            host: e.host,
        }
    }

    pub fn suite(&self) -> CipherSuite {
        self.keys.suite
    }

    pub fn provisioned_count(&self) -> usize {
        self.provisioned.len()
    }

    /// Last sequence number used by this client.
    pub fn last_seq(&self) -> u64 {
        self.send_counter.last()
    }

    fn base_line(&self) -> Field {
        AttestHeaderLine::new(names::BASE_ID, Value::Item(Item::bytes(self.base_id.clone())))
            .expect("base id shape")
            .to_field()
    }

    fn start(&self, method: &str, target: &str) -> Message {
        let mut m = Message::request(method, target);
        if !self.host.is_empty() {
            m.push_header("Host", self.host.clone());
        }
        m.headers.push(self.base_line());
        m
    }

    /// Secret provisioning request. `corrupt` damages one wrapped secret
    /// before the ticket is computed; it exists to exercise the service's
    /// failure path.
    pub fn atsp_request<S: AsRef<[u8]>>(
        &mut self,
        target: &str,
        secrets: &[S],
        corrupt: Option<usize>,
    ) -> Result<(Message, PendingRequest), SessionError> {
        let seq = self.send_counter.next_to_send()?;
        let mut wrapped = wrap_secrets(&self.keys, Direction::Client, seq, secrets)?;
        if let Some(w) = corrupt.and_then(|i| wrapped.get_mut(i)) {
            w[0] ^= 0x01;
        }
        let mut msg = self.start(ATTEST_METHOD, target);
        msg.headers.push(
            AttestHeaderLine::new(
                names::SECRETS,
                Value::List(wrapped.into_iter().map(Item::bytes).collect()),
            )
            .expect("secrets shape")
            .to_field(),
        );
        let ticket = attach_ticket(&self.keys, seq, &mut msg)?;
        Ok((
            msg,
            PendingRequest {
                class: RequestClass::AtrAtsp,
                ticket,
                provision: secrets
                    .iter()
                    .map(|s| Zeroizing::new(s.as_ref().to_vec()))
                    .collect(),
            },
        ))
    }

    pub fn trr_request(&mut self, spec: &TrrSpec) -> Result<(Message, PendingRequest), SessionError> {
        let seq = self.send_counter.next_to_send()?;
        let method = if spec.method.is_empty() { "POST" } else { &spec.method };
        let mut msg = self.start(method, &spec.target);
        for (k, v) in &spec.headers {
            msg.push_header(k.clone(), v.clone());
        }
        if let Some(t) = spec.termination {
            msg.headers.push(
                AttestHeaderLine::new(names::BASE_TERMINATION, Value::Item(Item::token(t.as_str())))
                    .expect("termination shape")
                    .to_field(),
            );
        }
        if spec.regions.is_empty() {
            msg.body = spec.body.clone();
        } else {
            let ctx = CargoContext {
                keys: &self.keys,
                dir: Direction::Client,
                seq,
                secrets: &self.provisioned,
                padding_block: self.padding_block,
            };
            let (body, line) = seal_cargo(&ctx, &spec.body, &spec.regions)?;
            msg.body = body;
            msg.trailers.push(line.to_field());
        }
        let ticket = attach_ticket(&self.keys, seq, &mut msg)?;
        Ok((
            msg,
            PendingRequest {
                class: RequestClass::Trr,
                ticket,
                provision: Vec::new(),
            },
        ))
    }

    /// Checks the binder, then opens any response cargo. Non-2xx answers carry
    /// no binder and are reported by status.
    pub fn finish(&mut self, pending: PendingRequest, resp: &Message) -> Result<ResponseView, String> {
        let status = resp.status().ok_or_else(|| reason::MALFORMED_RESPONSE.to_string())?;
        if !(200..300).contains(&status) {
            return Err(reason::status(status));
        }
        validate_binder(&self.keys, resp, &pending.ticket).map_err(str::to_string)?;
        let cargo: Vec<&Field> = attest_fields(resp).filter(|f| f.is_named(names::CARGO)).collect();
        let (body, regions) = match cargo.as_slice() {
            [] => (resp.body.clone(), Vec::new()),
            [f] => {
                let line = AttestHeaderLine::from_field(f)
                    .map_err(|_| reason::MALFORMED_CARGO.to_string())?;
                let ctx = CargoContext {
                    keys: &self.keys,
                    dir: Direction::Service,
                    seq: pending.ticket.seq,
                    secrets: &self.provisioned,
                    padding_block: 0,
                };
                open_cargo(&ctx, &resp.body, &line).map_err(|e| cargo_reason(&e).to_string())?
            }
            _ => return Err(reason::MALFORMED_CARGO.to_string()),
        };
        if pending.class == RequestClass::AtrAtsp {
            self.provisioned.extend(pending.provision);
        }
        Ok(ResponseView {
            status,
            headers: resp
                .headers
                .iter()
                .filter(|f| !crate::wire::is_attest_name(&f.name))
                .cloned()
                .collect(),
            body,
            regions,
        })
    }

    /// Key material, for leak scans in tests and the harness.
    pub fn secret_material(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = self.keys.secret_parts().iter().map(|p| p.to_vec()).collect();
        out.extend(self.provisioned.iter().map(|s| s.to_vec()));
        out.extend(self.service_secrets.iter().map(|s| s.to_vec()));
        out
    }
}

pub(crate) fn cargo_reason(e: &CargoError) -> &'static str {
    match e {
        CargoError::UnknownKeyIndex(_) => reason::UNKNOWN_KEY_INDEX,
        CargoError::AuthenticationFailure | CargoError::Crypto(_) => reason::AEAD_FAILURE,
        _ => reason::MALFORMED_CARGO,
    }
}
