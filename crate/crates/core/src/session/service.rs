use super::cargo::{open_cargo, seal_cargo, CargoContext, Region};
use super::client::cargo_reason;
use super::keys::Direction;
use super::secrets::unwrap_secrets;
use super::ticket::{attach_binder, validate_ticket, Ticket};
use crate::crypto::{accept_sequential_nonce, SequenceCounter};
use crate::handshake::{AttestBase, TerminationMethod};
use crate::reason;
use crate::wire::{attest_fields, is_attest_name, names, AttestHeaderLine, Field, Message};

/// The decrypted view handed to application code.
#[derive(Debug, Clone)]
pub struct AppRequest {
    pub method: String,
    pub target: String,
    /// Non-`Attest-*` headers, verbatim.
    pub headers: Vec<Field>,
    pub body: Vec<u8>,
    /// Protected spans of `body` as the client declared them.
    pub regions: Vec<Region>,
    /// `None` for untrusted requests.
    pub base_id: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct AppResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    /// Spans of `body` to protect on the way back.
    pub regions: Vec<Region>,
}

impl AppResponse {
    pub fn ok(body: impl Into<Vec<u8>>) -> Self {
        AppResponse {
            status: 200,
            headers: Vec::new(),
            body: body.into(),
            regions: Vec::new(),
        }
    }
}

pub trait App: Send + Sync {
    fn handle(&self, req: &AppRequest) -> AppResponse;
}

impl<F: Fn(&AppRequest) -> AppResponse + Send + Sync> App for F {
    fn handle(&self, req: &AppRequest) -> AppResponse {
        self(req)
    }
}

/// A protected request the service refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub status: u16,
    pub reason: &'static str,
    /// Set when the refusal must also end the base.
    pub terminate: Option<TerminationMethod>,
}

impl Rejection {
    fn forbidden(reason: &'static str) -> Self {
        Rejection {
            status: 403,
            reason,
            terminate: None,
        }
    }
}

/// A successful protected exchange; `terminate` is applied by the caller
/// after the response is written.
#[derive(Debug, Clone)]
pub struct Handled {
    pub response: Message,
    pub ticket: Ticket,
    pub terminate: Option<TerminationMethod>,
}

fn finish_response(base: &mut AttestBase, mut resp: Message, ticket: &Ticket) -> Result<Message, Rejection> {
    attach_binder(&base.keys, &mut resp, ticket)
        .map_err(|_| Rejection::forbidden(reason::AEAD_FAILURE))?;
    // the response direction mirrors the request sequence
    let mut mirror = base.send_counter;
    if accept_sequential_nonce(&mut mirror, ticket.seq, false) == crate::crypto::ReplayVerdict::Accept {
        base.send_counter = mirror;
    }
    Ok(resp)
}

fn check_ticket(base: &mut AttestBase, req: &Message) -> Result<Ticket, Rejection> {
    let strict = base.policies.replay.is_strict();
    let mut counter: SequenceCounter = base.recv_counter;
    let ticket = validate_ticket(&base.keys, &mut counter, req, strict).map_err(Rejection::forbidden)?;
    base.recv_counter = counter;
    Ok(ticket)
}

/// Secret provisioning: every wrapped secret must open, or the base ends.
pub fn handle_atsp(base: &mut AttestBase, req: &Message) -> Result<Handled, Rejection> {
    let ticket = check_ticket(base, req)?;
    let destroy = Rejection {
        status: 403,
        reason: reason::SECRET_REJECTED,
        terminate: Some(TerminationMethod::Destroy),
    };
    let fields: Vec<&Field> = attest_fields(req).filter(|f| f.is_named(names::SECRETS)).collect();
    let [field] = fields.as_slice() else {
        return Err(destroy);
    };
    let wrapped: Vec<Vec<u8>> = AttestHeaderLine::from_field(field)
        .ok()
        .and_then(|l| {
            l.value()
                .as_list()?
                .iter()
                .map(|i| i.bare.as_bytes().map(<[u8]>::to_vec))
                .collect()
        })
        .ok_or_else(|| destroy.clone())?;
    let secrets = unwrap_secrets(&base.keys, Direction::Client, ticket.seq, &wrapped).map_err(|i| {
        log::warn!("secret {i} failed to unwrap; terminating base");
        destroy.clone()
    })?;
    base.secret_store.extend(secrets);
    let resp = finish_response(base, Message::response(200), &ticket)?;
    Ok(Handled {
        response: resp,
        ticket,
        terminate: None,
    })
}

/// Trusted request: ticket, cargo, application, response cargo, binder.
pub fn handle_trr(
    base: &mut AttestBase,
    req: &Message,
    app: &dyn App,
    padding_block: usize,
) -> Result<Handled, Rejection> {
    let ticket = check_ticket(base, req)?;
    let terminate = match req.header(names::BASE_TERMINATION) {
        None => None,
        Some(_) => Some(
            req.headers
                .iter()
                .find(|f| f.is_named(names::BASE_TERMINATION))
                .and_then(|f| AttestHeaderLine::from_field(f).ok())
                .and_then(|l| l.value().as_item().and_then(|i| i.bare.as_token()).map(str::to_string))
                .and_then(|t| TerminationMethod::from_token(&t))
                .ok_or(Rejection {
                    status: 400,
                    reason: reason::MALFORMED_REQUEST,
                    terminate: None,
                })?,
        ),
    };
    let cargo: Vec<&Field> = attest_fields(req).filter(|f| f.is_named(names::CARGO)).collect();
    let (body, regions) = match cargo.as_slice() {
        [] => (req.body.clone(), Vec::new()),
        [f] => {
            let line = AttestHeaderLine::from_field(f)
                .map_err(|_| Rejection::forbidden(reason::MALFORMED_CARGO))?;
            let ctx = CargoContext {
                keys: &base.keys,
                dir: Direction::Client,
                seq: ticket.seq,
                secrets: &base.secret_store,
                padding_block: 0,
            };
            open_cargo(&ctx, &req.body, &line).map_err(|e| Rejection::forbidden(cargo_reason(&e)))?
        }
        _ => return Err(Rejection::forbidden(reason::MALFORMED_CARGO)),
    };
    let app_req = AppRequest {
        method: req.method().unwrap_or_default().to_string(),
        target: req.target().unwrap_or_default().to_string(),
        headers: req.headers.iter().filter(|f| !is_attest_name(&f.name)).cloned().collect(),
        body,
        regions,
        base_id: Some(base.base_id.to_vec()),
    };
    let out = app.handle(&app_req);
    let mut resp = Message::response(out.status);
    for (k, v) in out.headers {
        resp.push_header(k, v);
    }
    if out.regions.is_empty() {
        resp.body = out.body;
    } else {
        let ctx = CargoContext {
            keys: &base.keys,
            dir: Direction::Service,
            seq: ticket.seq,
            secrets: &base.secret_store,
            padding_block,
        };
        let (body, line) = seal_cargo(&ctx, &out.body, &out.regions)
            .map_err(|e| Rejection::forbidden(cargo_reason(&e)))?;
        resp.body = body;
        resp.trailers.push(line.to_field());
    }
    let resp = finish_response(base, resp, &ticket)?;
    Ok(Handled {
        response: resp,
        ticket,
        terminate,
    })
}
