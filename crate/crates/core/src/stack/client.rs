use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ed25519_dalek::SigningKey;
use serde::{Deserialize, Serialize};

use super::clock::Clock;
use super::config::ClientConfig;
use super::transport::Transport;
use crate::attest::{QService, TrustAnchor};
use crate::crypto::ProtocolRng;
use crate::handshake::{client_begin, client_finish, TerminationMethod};
use crate::reason;
use crate::session::{ClientSession, Region, TrrSpec};
use crate::wire::{canonical_name, Field, Message};

/// A cached preflight answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreflightResult {
    pub allow_methods: BTreeSet<String>,
    pub allow_headers: BTreeSet<String>,
    pub max_age: u64,
    pub fetched_at: u64,
}

impl PreflightResult {
    pub fn usable(&self, now: u64) -> bool {
        now < self.fetched_at.saturating_add(self.max_age)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// What one scripted step produced, as seen by the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepResult {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    /// Request/response pairs this step put on the wire.
    pub exchanges: usize,
    /// Decrypted response body; kept out of serialized logs.
    #[serde(skip)]
    pub body: Option<Vec<u8>>,
    /// Non-`Attest-*` response headers.
    #[serde(skip)]
    pub headers: Vec<Field>,
}

impl StepResult {
    fn accept(status: Option<u16>, exchanges: usize) -> Self {
        StepResult {
            verdict: Verdict::Accept,
            reason: None,
            status,
            exchanges,
            body: None,
            headers: Vec::new(),
        }
    }

    fn reject(reason: impl Into<String>, status: Option<u16>, exchanges: usize) -> Self {
        StepResult {
            verdict: Verdict::Reject,
            reason: Some(reason.into()),
            status,
            exchanges,
            body: None,
            headers: Vec::new(),
        }
    }

    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accept
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|f| f.is_named(name)).and_then(Field::value_str)
    }
}

/// A message as logged: everything but the body bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WireRecord {
    pub start: String,
    pub headers: Vec<(String, String)>,
    pub trailers: Vec<(String, String)>,
    pub body_len: usize,
}

impl WireRecord {
    pub fn of(msg: &Message) -> Self {
        let text = |fs: &[Field]| {
            fs.iter()
                .map(|f| (f.name.clone(), String::from_utf8_lossy(&f.value).into_owned()))
                .collect()
        };
        WireRecord {
            start: match (msg.method(), msg.target(), msg.status()) {
                (Some(m), Some(t), _) => format!("{m} {t}"),
                (_, _, Some(s)) => s.to_string(),
                _ => String::new(),
            },
            headers: text(&msg.headers),
            trailers: text(&msg.trailers),
            body_len: msg.body.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WireExchange {
    pub request: WireRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<WireRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub step: String,
    #[serde(flatten)]
    pub result: StepResult,
    pub wire: Vec<WireExchange>,
}

pub type TranscriptLog = Vec<TranscriptEntry>;

/// A scripted client action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ClientAction {
    Preflight,
    Handshake,
    Atsp {
        secrets: Vec<String>,
        #[serde(default)]
        corrupt: Option<usize>,
    },
    Trr(TrrAction),
    Utr {
        #[serde(default = "get")]
        method: String,
        target: String,
        #[serde(default)]
        body: String,
    },
    ResendLast,
}

fn get() -> String {
    "GET".into()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrrAction {
    pub method: String,
    pub target: String,
    pub headers: BTreeMap<String, String>,
    pub body: String,
    pub regions: Vec<Region>,
    pub termination: Option<TerminationMethod>,
}

impl TrrAction {
    pub fn spec(&self) -> TrrSpec {
        TrrSpec {
            method: self.method.clone(),
            target: if self.target.is_empty() { "/echo".into() } else { self.target.clone() },
            headers: self.headers.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            body: self.body.clone().into_bytes(),
            regions: self.regions.clone(),
            termination: self.termination,
        }
    }
}

impl ClientAction {
    pub fn name(&self) -> &'static str {
        match self {
            ClientAction::Preflight => "preflight",
            ClientAction::Handshake => "handshake",
            ClientAction::Atsp { .. } => "atsp",
            ClientAction::Trr(_) => "trr",
            ClientAction::Utr { .. } => "utr",
            ClientAction::ResendLast => "resend_last",
        }
    }
}

/// The client endpoint: preflight cache, handshake driver and session.
pub struct Client {
    config: ClientConfig,
    transport: Box<dyn Transport>,
    rng: ProtocolRng,
    clock: Arc<dyn Clock>,
    quoter: QService,
    signer: SigningKey,
    anchors: Vec<TrustAnchor>,
    preflight: Option<PreflightResult>,
    session: Option<ClientSession>,
    last_protected: Option<Message>,
    aborted: bool,
    options_sent: usize,
    log: TranscriptLog,
    pending_wire: Vec<WireExchange>,
}

impl Client {
    pub fn new(config: ClientConfig, transport: Box<dyn Transport>, rng: ProtocolRng, clock: Arc<dyn Clock>) -> Self {
        let quoter = QService::mock_root();
        let anchors = config.anchors.clone().unwrap_or_else(|| vec![quoter.anchor()]);
        let signer = SigningKey::from_bytes(&rng.array());
        Client {
            config,
            transport,
            rng,
            clock,
            quoter,
            signer,
            anchors,
            preflight: None,
            session: None,
            last_protected: None,
            aborted: false,
            options_sent: 0,
            log: Vec::new(),
            pending_wire: Vec::new(),
        }
    }

    pub fn with_signer(mut self, key: SigningKey) -> Self {
        self.signer = key;
        self
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn session(&self) -> Option<&ClientSession> {
        self.session.as_ref()
    }

    pub fn preflight_cache(&self) -> Option<&PreflightResult> {
        self.preflight.as_ref()
    }

    /// OPTIONS requests actually sent.
    pub fn options_sent(&self) -> usize {
        self.options_sent
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    pub fn log(&self) -> &TranscriptLog {
        &self.log
    }

    pub fn into_log(self) -> TranscriptLog {
        self.log
    }

    /// Key material and provisioned secrets of the current session.
    pub fn secret_material(&self) -> Vec<Vec<u8>> {
        self.session.as_ref().map(ClientSession::secret_material).unwrap_or_default()
    }

    fn send(&mut self, req: &Message) -> Result<Message, StepResult> {
        let exchanged = self.transport.exchange(req);
        self.pending_wire.push(WireExchange {
            request: WireRecord::of(req),
            response: exchanged.as_ref().ok().map(WireRecord::of),
        });
        exchanged.map_err(|e| {
            log::warn!("transport: {e}");
            StepResult::reject(reason::TRANSPORT_ERROR, None, self.pending_wire.len())
        })
    }

    fn record(&mut self, step: &str, mut result: StepResult) -> StepResult {
        result.exchanges = self.pending_wire.len();
        if result.verdict == Verdict::Reject && self.config.abort_on_reject && step != "utr" {
            self.aborted = true;
        }
        self.log.push(TranscriptEntry {
            step: step.into(),
            result: result.clone(),
            wire: std::mem::take(&mut self.pending_wire),
        });
        result
    }

    pub fn run(&mut self, action: &ClientAction) -> StepResult {
        let name = action.name();
        if self.aborted && !matches!(action, ClientAction::Utr { .. }) {
            return self.record(name, StepResult::reject(reason::ABORTED, None, 0));
        }
        let result = match action {
            ClientAction::Preflight => self.do_preflight(),
            ClientAction::Handshake => self.do_handshake(),
            ClientAction::Atsp { secrets, corrupt } => self.do_atsp(secrets, *corrupt),
            ClientAction::Trr(t) => self.do_trr(&t.spec()),
            ClientAction::Utr { method, target, body } => self.do_utr(method, target, body),
            ClientAction::ResendLast => self.do_resend(),
        };
        self.record(name, result)
    }

    pub fn preflight(&mut self) -> StepResult {
        self.run(&ClientAction::Preflight)
    }

    pub fn handshake(&mut self) -> StepResult {
        self.run(&ClientAction::Handshake)
    }

    pub fn provision(&mut self, secrets: &[&str], corrupt: Option<usize>) -> StepResult {
        self.run(&ClientAction::Atsp {
            secrets: secrets.iter().map(|s| s.to_string()).collect(),
            corrupt,
        })
    }

    pub fn trusted(&mut self, action: TrrAction) -> StepResult {
        self.run(&ClientAction::Trr(action))
    }

    fn do_preflight(&mut self) -> StepResult {
        let now = self.clock.now();
        if self.preflight.as_ref().is_some_and(|p| p.usable(now)) {
            return StepResult::accept(None, 0);
        }
        let requested = self.config.requested_headers();
        let mut req = Message::request("OPTIONS", self.config.attest_target.clone());
        if !self.config.host.is_empty() {
            req.push_header("Host", self.config.host.clone());
        }
        req.push_header("Access-Control-Request-Method", "ATTEST");
        req.push_header("Access-Control-Request-Headers", requested.join(", "));
        self.options_sent += 1;
        let resp = match self.send(&req) {
            Ok(r) => r,
            Err(e) => return e,
        };
        let status = resp.status();
        let fail = |why: &str| {
            log::warn!("preflight: {why}");
            let mut r = StepResult::reject(reason::PREFLIGHT_REJECTED, status, 1);
            r.headers = resp.headers.clone();
            r
        };
        if !status.is_some_and(|s| (200..300).contains(&s)) {
            self.aborted = true;
            return fail("non-success status");
        }
        let tokens = |name: &str| -> BTreeSet<String> {
            resp.header_str(name)
                .unwrap_or_default()
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        };
        let allow_methods = tokens("Allow");
        let allow_headers: BTreeSet<String> = tokens("Access-Control-Allow-Headers")
            .iter()
            .map(|h| canonical_name(h))
            .collect();
        // failure here is fatal for the client regardless of policy
        if !allow_methods.contains("ATTEST") {
            self.aborted = true;
            return fail("ATTEST not allowed");
        }
        let missing: Vec<&String> = requested
            .iter()
            .filter(|h| !allow_headers.iter().any(|a| a.eq_ignore_ascii_case(h)))
            .collect();
        if !missing.is_empty() {
            self.aborted = true;
            return fail(&format!("unsupported fields {missing:?}"));
        }
        let max_age = resp
            .header_str("Access-Control-Max-Age")
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0);
        self.preflight = Some(PreflightResult {
            allow_methods,
            allow_headers,
            max_age,
            fetched_at: now,
        });
        StepResult::accept(status, 1)
    }

    fn do_handshake(&mut self) -> StepResult {
        let now = self.clock.now();
        let (req, state) = client_begin(&self.config, &self.quoter, Some(&self.signer), &self.rng, now);
        let resp = match self.send(&req) {
            Ok(r) => r,
            Err(e) => return e,
        };
        match client_finish(state, &resp, &self.anchors, &self.config.policy) {
            Ok(session) => {
                log::info!(
                    "handshake complete: base {} suite {}",
                    crate::wire::b64_encode(&session.base_id),
                    session.suite().id()
                );
                self.session = Some(session);
                StepResult::accept(resp.status(), 1)
            }
            Err(r) => StepResult::reject(r, resp.status(), 1),
        }
    }

    fn do_atsp(&mut self, secrets: &[String], corrupt: Option<usize>) -> StepResult {
        let target = self.config.attest_target.clone();
        let Some(session) = self.session.as_mut() else {
            return StepResult::reject(reason::NO_SESSION, None, 0);
        };
        let (req, pending) = match session.atsp_request(&target, secrets, corrupt) {
            Ok(x) => x,
            Err(e) => return StepResult::reject(e.to_string(), None, 0),
        };
        self.finish_protected(req, pending, None)
    }

    fn do_trr(&mut self, spec: &TrrSpec) -> StepResult {
        let Some(session) = self.session.as_mut() else {
            return StepResult::reject(reason::NO_SESSION, None, 0);
        };
        let (req, pending) = match session.trr_request(spec) {
            Ok(x) => x,
            Err(e) => return StepResult::reject(e.to_string(), None, 0),
        };
        self.finish_protected(req, pending, spec.termination)
    }

    fn finish_protected(
        &mut self,
        req: Message,
        pending: crate::session::PendingRequest,
        termination: Option<TerminationMethod>,
    ) -> StepResult {
        let resp = match self.send(&req) {
            Ok(r) => r,
            Err(e) => return e,
        };
        self.last_protected = Some(req);
        let session = self.session.as_mut().expect("checked by caller");
        match session.finish(pending, &resp) {
            Ok(view) => {
                if matches!(termination, Some(TerminationMethod::Cleanup | TerminationMethod::Destroy)) {
                    self.session = None;
                }
                let mut r = StepResult::accept(Some(view.status), 1);
                r.body = Some(view.body);
                r.headers = view.headers;
                r
            }
            Err(why) => {
                let mut r = StepResult::reject(why, resp.status(), 1);
                r.body = Some(resp.body.clone());
                r.headers = resp.headers.clone();
                r
            }
        }
    }

    fn do_utr(&mut self, method: &str, target: &str, body: &str) -> StepResult {
        let mut req = Message::request(method, target);
        if !self.config.host.is_empty() {
            req.push_header("Host", self.config.host.clone());
        }
        req.body = body.as_bytes().to_vec();
        let resp = match self.send(&req) {
            Ok(r) => r,
            Err(e) => return e,
        };
        let status = resp.status().unwrap_or(0);
        let mut r = if (200..300).contains(&status) {
            StepResult::accept(Some(status), 1)
        } else {
            StepResult::reject(reason::status(status), Some(status), 1)
        };
        r.body = Some(resp.body.clone());
        r.headers = resp.headers;
        r
    }

    /// Sends the last protected request again, byte for byte.
    fn do_resend(&mut self) -> StepResult {
        let Some(req) = self.last_protected.clone() else {
            return StepResult::reject(reason::NO_SESSION, None, 0);
        };
        let resp = match self.send(&req) {
            Ok(r) => r,
            Err(e) => return e,
        };
        let status = resp.status().unwrap_or(0);
        let mut r = if (200..300).contains(&status) {
            StepResult::accept(Some(status), 1)
        } else {
            StepResult::reject(reason::status(status), Some(status), 1)
        };
        r.body = Some(resp.body.clone());
        r.headers = resp.headers;
        r
    }
}

/// Runs a script start to finish and returns the client's transcript.
pub fn client_run(
    config: ClientConfig,
    transport: Box<dyn Transport>,
    script: &[ClientAction],
    rng: ProtocolRng,
    clock: Arc<dyn Clock>,
) -> TranscriptLog {
    let mut client = Client::new(config, transport, rng, clock);
    for action in script {
        client.run(action);
    }
    client.into_log()
}
