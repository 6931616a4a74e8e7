//! An L7 intermediary: parses every message, applies scripted tampering,
//! re-serializes and forwards, recording what it saw.

mod capture;
mod rules;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

pub use capture::{CaptureLog, CaptureRecord, Stage};
pub use rules::{apply_rule, Action, Applied, Direction, MatchClass, Selector, TamperRule};

use crate::stack::{spawn_listener, Clock, ServerHandle, TcpTransport, Transport, TransportError};
use crate::wire::{parse_message, read_message, serialize_message, Limits, Message};

/// Rule state for one hop. Shared by all connections through that hop so
/// `nth` counts the hop's whole traffic.
#[derive(Debug, Default)]
pub struct Tamperer {
    rules: Vec<TamperRule>,
    seen: Vec<usize>,
    previous: HashMap<(Option<MatchClass>, Direction), Message>,
    edits: usize,
}

impl Tamperer {
    pub fn new(rules: Vec<TamperRule>) -> Self {
        Tamperer {
            seen: vec![0; rules.len()],
            rules,
            previous: HashMap::new(),
            edits: 0,
        }
    }

    /// Messages actually altered so far.
    pub fn edits(&self) -> usize {
        self.edits
    }

    /// `None` means the message is dropped.
    pub fn process(&mut self, msg: Message, class: Option<MatchClass>, dir: Direction) -> Option<Message> {
        let original = msg.clone();
        let mut msg = msg;
        let (mut edited, mut replay, mut dropped) = (false, false, false);
        for (i, rule) in self.rules.iter().enumerate() {
            if !rule.matches(class, dir) {
                continue;
            }
            self.seen[i] += 1;
            if rule.nth.is_some_and(|n| n != self.seen[i]) {
                continue;
            }
            match apply_rule(rule, &mut msg) {
                Applied::Edited => edited = true,
                Applied::Replay => replay = true,
                Applied::Dropped => dropped = true,
                Applied::NoTarget => {}
            }
        }
        if replay {
            if let Some(prev) = self.previous.get(&(class, dir)) {
                msg = prev.clone();
                edited = true;
            }
        }
        self.previous.insert((class, dir), original);
        if edited || dropped {
            self.edits += 1;
        }
        (!dropped).then_some(msg)
    }
}

fn bad_gateway() -> Message {
    Message::response(502)
        .with_header("Content-Type", "text/plain")
        .with_body("Bad Gateway\n")
}

/// One hop between a downstream peer and `upstream`.
pub struct Middlebox {
    hop: usize,
    tamperer: Arc<Mutex<Tamperer>>,
    upstream: Box<dyn Transport>,
    capture: CaptureLog,
    clock: Arc<dyn Clock>,
}

impl Middlebox {
    pub fn new(
        hop: usize,
        rules: Vec<TamperRule>,
        upstream: Box<dyn Transport>,
        capture: CaptureLog,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self::with_state(hop, Arc::new(Mutex::new(Tamperer::new(rules))), upstream, capture, clock)
    }

    pub fn with_state(
        hop: usize,
        tamperer: Arc<Mutex<Tamperer>>,
        upstream: Box<dyn Transport>,
        capture: CaptureLog,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Middlebox {
            hop,
            tamperer,
            upstream,
            capture,
            clock,
        }
    }

    pub fn tamperer(&self) -> Arc<Mutex<Tamperer>> {
        self.tamperer.clone()
    }

    fn tamper(&self, msg: Message, class: Option<MatchClass>, dir: Direction) -> Option<Message> {
        self.tamperer
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .process(msg, class, dir)
    }

    fn emit(&self, dir: Direction, msg: &Message) -> Option<Vec<u8>> {
        let bytes = serialize_message(msg).ok()?;
        self.capture.push(self.hop, dir, Stage::Forwarded, &bytes, self.clock.now());
        Some(bytes)
    }

    /// Forwards one raw request and returns the raw response to send back.
    pub fn relay(&mut self, raw: &[u8]) -> Vec<u8> {
        let now = self.clock.now();
        self.capture.push(self.hop, Direction::Request, Stage::Received, raw, now);
        let fail = |this: &Self| this.emit(Direction::Response, &bad_gateway()).unwrap_or_default();
        let Ok(req) = parse_message(raw) else {
            log::debug!("hop {}: unparseable request", self.hop);
            return fail(self);
        };
        let class = MatchClass::of(&req);
        let Some(req) = self.tamper(req, class, Direction::Request) else {
            return fail(self);
        };
        let Some(out) = self.emit(Direction::Request, &req) else {
            return fail(self);
        };
        // what goes upstream is exactly what was serialized above
        let Ok(sent) = parse_message(&out) else {
            return fail(self);
        };
        let resp = match self.upstream.exchange(&sent) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("hop {}: upstream failed: {e}", self.hop);
                return fail(self);
            }
        };
        let Ok(resp_raw) = serialize_message(&resp) else {
            return fail(self);
        };
        self.capture
            .push(self.hop, Direction::Response, Stage::Received, &resp_raw, self.clock.now());
        let Some(resp) = self.tamper(resp, class, Direction::Response) else {
            return fail(self);
        };
        self.emit(Direction::Response, &resp).unwrap_or_else(|| fail(self))
    }
}

impl Transport for Middlebox {
    fn exchange(&mut self, req: &Message) -> Result<Message, TransportError> {
        let raw = serialize_message(req)?;
        let out = self.relay(&raw);
        Ok(parse_message(&out)?)
    }
}

/// client → hop 1 → … → hop n → `terminal`. Each hop gets its own rules.
pub fn chain(
    terminal: Box<dyn Transport>,
    hops: &[Vec<TamperRule>],
    capture: &CaptureLog,
    clock: Arc<dyn Clock>,
) -> Box<dyn Transport> {
    let mut t = terminal;
    for (i, rules) in hops.iter().enumerate().rev() {
        t = Box::new(Middlebox::new(i + 1, rules.clone(), t, capture.clone(), clock.clone()));
    }
    t
}

/// A TCP forwarding proxy in front of `upstream`.
pub fn proxy(
    hop: usize,
    listen: &str,
    upstream: SocketAddr,
    rules: Vec<TamperRule>,
    capture: CaptureLog,
    clock: Arc<dyn Clock>,
) -> std::io::Result<ServerHandle> {
    let state = Arc::new(Mutex::new(Tamperer::new(rules)));
    spawn_listener(listen, move |mut conn| {
        use std::io::Write;
        let mut mb = Middlebox::with_state(
            hop,
            state.clone(),
            Box::new(TcpTransport::new(upstream)),
            capture.clone(),
            clock.clone(),
        );
        conn.set_nodelay(true).ok();
        let Ok(reader) = conn.try_clone() else { return };
        let mut reader = std::io::BufReader::new(reader);
        while let Ok((_, raw)) = read_message(&mut reader, &Limits::default()) {
            let out = mb.relay(&raw);
            if conn.write_all(&out).and_then(|_| conn.flush()).is_err() {
                break;
            }
        }
    })
}
