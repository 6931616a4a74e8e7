use std::sync::{Arc, Mutex};
use std::time::{Duration, UNIX_EPOCH};

use serde::Serialize;

use super::apps::EchoApp;
use super::clock::Clock;
use super::config::ServiceConfig;
use crate::attest::{QService, TrustAnchor};
use crate::crypto::ProtocolRng;
use crate::handshake::{lock, service_handle_aths, Registry, RegistryError, ServiceEnv, TerminationMethod};
use crate::reason;
use crate::session::{handle_atsp, handle_trr, App, AppRequest, Handled, Rejection};
use crate::wire::{
    canonical_name, classify_request, is_attest_name, names, AttestHeaderLine, Message, RequestClass,
    ATTEST_METHOD,
};

/// Body of every "quietly ignored" answer.
pub const NOT_FOUND_BODY: &[u8] = b"Not Found\n";

const ALLOW_ATTEST: &str = "OPTIONS, GET, HEAD, POST, PUT, DELETE, ATTEST";
const ALLOW_PLAIN: &str = "OPTIONS, GET, HEAD, POST, PUT, DELETE";

pub fn http_date(now: u64) -> String {
    httpdate::fmt_http_date(UNIX_EPOCH + Duration::from_secs(now))
}

/// The single 404 used for unknown routes, unknown or dead bases and
/// disabled untrusted requests. It carries no `Attest-*` field.
pub fn generic_not_found(now: u64) -> Message {
    Message::response(404)
        .with_header("Date", http_date(now))
        .with_header("Content-Type", "text/plain")
        .with_body(NOT_FOUND_BODY)
}

/// Error answers say nothing beyond their status.
fn status_response(status: u16, now: u64) -> Message {
    let body: &[u8] = match status {
        400 => b"Bad Request\n",
        403 => b"Forbidden\n",
        501 => b"Not Implemented\n",
        503 => b"Service Unavailable\n",
        _ => b"Error\n",
    };
    Message::response(status)
        .with_header("Date", http_date(now))
        .with_header("Content-Type", "text/plain")
        .with_body(body)
}

/// One line of the service's audit trail. Reasons never leave the service
/// on the wire; they are recorded here for operators and the harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceEvent {
    pub class: String,
    pub method: String,
    pub target: String,
    pub status: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_id: Option<String>,
}

/// The server-side endpoint: preflight, dispatch, handshake and protected
/// traffic over a base registry.
pub struct Service {
    config: ServiceConfig,
    registry: Registry,
    quoter: QService,
    anchors: Vec<TrustAnchor>,
    rng: ProtocolRng,
    clock: Arc<dyn Clock>,
    app: Arc<dyn App>,
    events: Mutex<Vec<ServiceEvent>>,
}

struct Outcome {
    class: &'static str,
    response: Message,
    reason: Option<&'static str>,
    base_id: Option<Vec<u8>>,
}

impl Service {
    pub fn new(config: ServiceConfig, rng: ProtocolRng, clock: Arc<dyn Clock>) -> Self {
        let quoter = QService::mock_root();
        Service {
            registry: Registry::new(config.identity.identity(), config.max_instances, rng.fork()),
            anchors: vec![quoter.anchor()],
            quoter,
            config,
            rng,
            clock,
            app: Arc::new(EchoApp),
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn with_app(mut self, app: Arc<dyn App>) -> Self {
        self.app = app;
        self
    }

    /// Anchors used to verify client quotes.
    pub fn with_anchors(mut self, anchors: Vec<TrustAnchor>) -> Self {
        self.anchors = anchors;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn events(&self) -> Vec<ServiceEvent> {
        self.events.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn take_events(&self) -> Vec<ServiceEvent> {
        std::mem::take(&mut *self.events.lock().unwrap_or_else(|p| p.into_inner()))
    }

    /// Answers one request.
    pub fn handle(&self, req: &Message) -> Message {
        let now = self.clock.now();
        let out = if self.config.plain {
            self.handle_plain(req, now)
        } else {
            self.dispatch(req, now)
        };
        let event = ServiceEvent {
            class: out.class.into(),
            method: req.method().unwrap_or_default().into(),
            target: req.target().unwrap_or_default().into(),
            status: out.response.status().unwrap_or(0),
            reason: out.reason.map(str::to_string),
            base_id: out.base_id.as_deref().map(crate::wire::b64_encode),
        };
        log::info!(
            "{} {} {} -> {}{}",
            event.class,
            event.method,
            event.target,
            event.status,
            event.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default()
        );
        self.events.lock().unwrap_or_else(|p| p.into_inner()).push(event);
        out.response
    }

    fn dispatch(&self, req: &Message, now: u64) -> Outcome {
        if req.method() == Some("OPTIONS") {
            return Outcome {
                class: "preflight",
                response: self.preflight(req, now),
                reason: None,
                base_id: None,
            };
        }
        let class = match classify_request(req) {
            Ok(c) => c,
            Err(_) => {
                return Outcome {
                    class: "invalid",
                    response: status_response(400, now),
                    reason: Some(reason::MALFORMED_REQUEST),
                    base_id: None,
                }
            }
        };
        match class {
            RequestClass::Utr => self.untrusted(req, now),
            RequestClass::AtrAths => self.handshake(req, now),
            RequestClass::AtrAtsp | RequestClass::Trr => self.protected(req, class, now),
        }
    }

    /// Allow, the supported subset of the requested fields, and a max-age.
    /// Apart from Date the answer depends only on the request.
    pub fn preflight(&self, req: &Message, now: u64) -> Message {
        let advertised = self.config.advertised_headers();
        let supported = |h: &str| advertised.iter().any(|a| a.eq_ignore_ascii_case(h));
        let allowed: Vec<String> = match req.header_str("Access-Control-Request-Headers") {
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|h| !h.is_empty() && supported(h))
                .map(canonical_name)
                .collect(),
            None => advertised.clone(),
        };
        Message::response(200)
            .with_header("Date", http_date(now))
            .with_header("Allow", ALLOW_ATTEST)
            .with_header("Access-Control-Allow-Methods", ALLOW_ATTEST)
            .with_header("Access-Control-Allow-Headers", allowed.join(", "))
            .with_header("Access-Control-Max-Age", self.config.preflight_max_age.to_string())
    }

    fn untrusted(&self, req: &Message, now: u64) -> Outcome {
        if !self.config.allow_untrusted {
            return Outcome {
                class: RequestClass::Utr.as_str(),
                response: generic_not_found(now),
                reason: Some(reason::UNTRUSTED_DISABLED),
                base_id: None,
            };
        }
        let (response, reason) = self.run_plain_app(req, now);
        Outcome {
            class: RequestClass::Utr.as_str(),
            response,
            reason,
            base_id: None,
        }
    }

    fn run_plain_app(&self, req: &Message, now: u64) -> (Message, Option<&'static str>) {
        let out = self.app.handle(&AppRequest {
            method: req.method().unwrap_or_default().into(),
            target: req.target().unwrap_or_default().into(),
            headers: req.headers.clone(),
            body: req.body.clone(),
            regions: Vec::new(),
            base_id: None,
        });
        if out.status == 404 {
            return (generic_not_found(now), Some(reason::UNKNOWN_ROUTE));
        }
        let mut resp = Message::response(out.status).with_header("Date", http_date(now));
        for (k, v) in out.headers {
            resp.push_header(k, v);
        }
        resp.body = out.body;
        (resp, None)
    }

    fn handshake(&self, req: &Message, now: u64) -> Outcome {
        let env = ServiceEnv {
            config: &self.config,
            registry: &self.registry,
            quoter: &self.quoter,
            anchors: &self.anchors,
            rng: &self.rng,
            now,
        };
        match service_handle_aths(req, &env) {
            Ok((mut resp, base)) => {
                resp.headers.insert(0, crate::wire::Field::new("Date", http_date(now)));
                Outcome {
                    class: RequestClass::AtrAths.as_str(),
                    response: resp,
                    reason: None,
                    base_id: Some(lock(&base).base_id.to_vec()),
                }
            }
            Err(rej) => Outcome {
                class: RequestClass::AtrAths.as_str(),
                response: status_response(rej.status, now),
                reason: Some(rej.reason),
                base_id: None,
            },
        }
    }

    fn protected(&self, req: &Message, class: RequestClass, now: u64) -> Outcome {
        let hidden = |reason: &'static str| Outcome {
            class: class.as_str(),
            response: generic_not_found(now),
            reason: Some(reason),
            base_id: None,
        };
        let Some(base_id) = requested_base(req) else {
            return hidden(reason::UNKNOWN_BASE);
        };
        let handle = match self.registry.lookup(&base_id, now) {
            Ok(h) => h,
            Err(RegistryError::Expired) => return hidden(reason::EXPIRED_BASE),
            Err(RegistryError::AlreadyTerminated) => return hidden(reason::TERMINATED_BASE),
            Err(_) => return hidden(reason::UNKNOWN_BASE),
        };
        let result: Result<Handled, Rejection> = {
            let mut base = lock(&handle);
            match class {
                RequestClass::AtrAtsp => handle_atsp(&mut base, req),
                _ => handle_trr(&mut base, req, self.app.as_ref(), self.config.padding_block),
            }
        };
        let (mut response, reason, terminate) = match result {
            Ok(h) => (h.response, None, h.terminate),
            Err(r) => (status_response(r.status, now), Some(r.reason), r.terminate),
        };
        if !response.headers.iter().any(|f| f.is_named("Date")) {
            response.headers.insert(0, crate::wire::Field::new("Date", http_date(now)));
        }
        if let Some(method) = terminate {
            self.terminate(&base_id, method);
        }
        Outcome {
            class: class.as_str(),
            response,
            reason,
            base_id: Some(base_id),
        }
    }

    fn terminate(&self, base_id: &[u8], method: TerminationMethod) {
        match self.registry.terminate(base_id, method) {
            Ok(()) => log::info!("base {} terminated ({})", crate::wire::b64_encode(base_id), method.as_str()),
            Err(e) => log::debug!("termination skipped: {e}"),
        }
    }

    /// An ordinary HTTP server: no ATTEST in Allow, 501 for ATTEST itself.
    fn handle_plain(&self, req: &Message, now: u64) -> Outcome {
        if req.method() == Some("OPTIONS") {
            return Outcome {
                class: "preflight",
                response: Message::response(200)
                    .with_header("Date", http_date(now))
                    .with_header("Allow", ALLOW_PLAIN),
                reason: None,
                base_id: None,
            };
        }
        if req.method() == Some(ATTEST_METHOD) {
            return Outcome {
                class: "plain",
                response: status_response(501, now),
                reason: Some(reason::MALFORMED_REQUEST),
                base_id: None,
            };
        }
        let (response, reason) = self.run_plain_app(req, now);
        Outcome {
            class: "plain",
            response,
            reason,
            base_id: None,
        }
    }
}

fn requested_base(req: &Message) -> Option<Vec<u8>> {
    let mut fields = req.all_fields().filter(|f| is_attest_name(&f.name) && f.is_named(names::BASE_ID));
    let field = fields.next()?;
    if fields.next().is_some() {
        return None;
    }
    let line = AttestHeaderLine::from_field(field).ok()?;
    let item = line.value().as_item()?;
    item.bare.as_bytes().map(<[u8]>::to_vec)
}
