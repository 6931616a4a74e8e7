use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::scenario::{state_name, HarnessAction, RegistryExpect, Scenario, Step, StepAction, TransportKind};
use crate::crypto::ProtocolRng;
use crate::middlebox::{chain, proxy, CaptureLog, TamperRule};
use crate::stack::{
    serve, Client, ClientAction, InProcess, ManualClock, ServerHandle, Service, StepResult, TcpTransport,
    TranscriptLog, Transport, Verdict,
};

/// The run could not be set up; distinct from a scenario that ran and failed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("environment failure: {0}")]
pub struct EnvironmentFailure(pub String);

/// Knobs that vary a run without editing the scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Transparent middleboxes added between the scenario's hops and the
    /// service.
    pub extra_hops: usize,
    pub transport: Option<TransportKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub client: String,
    pub action: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service_reason: Option<String>,
    pub exchanges: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl StepReport {
    /// The part of a step that must not depend on topology.
    pub fn verdict_key(&self) -> (String, Verdict, Option<String>, Option<String>) {
        (
            self.action.clone(),
            self.verdict,
            self.reason.clone(),
            self.service_reason.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub name: String,
    pub passed: bool,
    pub hops: usize,
    pub transport: TransportKind,
    pub steps: Vec<StepReport>,
    /// Capture records holding secret or key bytes.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub leaks: Vec<String>,
    pub captured_messages: usize,
    pub duration_ms: u128,
    /// Per-client wire transcripts.
    #[serde(skip)]
    pub transcripts: BTreeMap<String, TranscriptLog>,
}

impl Report {
    pub fn verdicts(&self) -> Vec<(String, Verdict, Option<String>, Option<String>)> {
        self.steps.iter().map(StepReport::verdict_key).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} ({} hop(s), {:?}, {} ms)\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.hops,
            self.transport,
            self.duration_ms
        );
        for s in &self.steps {
            let verdict = match s.verdict {
                Verdict::Accept => "accept".to_string(),
                Verdict::Reject => format!("reject {}", s.reason.as_deref().unwrap_or("?")),
            };
            out.push_str(&format!(
                "  [{}] {:>2} {:<8} {:<15} {}{}\n",
                if s.passed { "ok" } else { "!!" },
                s.index,
                s.client,
                s.action,
                verdict,
                s.service_reason
                    .as_deref()
                    .map(|r| format!(" (service: {r})"))
                    .unwrap_or_default()
            ));
            for f in &s.failures {
                out.push_str(&format!("       - {f}\n"));
            }
        }
        for l in &self.leaks {
            out.push_str(&format!("  leak: {l}\n"));
        }
        out
    }
}

struct Topology {
    service: Arc<Service>,
    capture: CaptureLog,
    clock: Arc<ManualClock>,
    servers: Vec<ServerHandle>,
    entry: Option<std::net::SocketAddr>,
    hops: Vec<Vec<TamperRule>>,
}

impl Topology {
    fn build(s: &Scenario, opts: &RunOptions, rng: &ProtocolRng) -> Result<Topology, EnvironmentFailure> {
        let clock = Arc::new(ManualClock::new(s.start_time));
        let service = Arc::new(Service::new(s.service.clone(), rng.fork(), clock.clone()));
        let mut hops = s.hops.clone();
        hops.extend(std::iter::repeat_with(Vec::new).take(opts.extra_hops));
        let capture = CaptureLog::new();
        let mut topo = Topology {
            service,
            capture,
            clock,
            servers: Vec::new(),
            entry: None,
            hops,
        };
        if opts.transport.unwrap_or(s.transport) == TransportKind::Tcp {
            let server = serve(topo.service.clone(), "127.0.0.1:0")
                .map_err(|e| EnvironmentFailure(format!("cannot listen: {e}")))?;
            let mut upstream = server.addr();
            topo.servers.push(server);
            for (i, rules) in topo.hops.iter().enumerate().rev() {
                let p = proxy(i + 1, "127.0.0.1:0", upstream, rules.clone(), topo.capture.clone(), topo.clock.clone())
                    .map_err(|e| EnvironmentFailure(format!("cannot start proxy: {e}")))?;
                upstream = p.addr();
                topo.servers.push(p);
            }
            topo.entry = Some(upstream);
        }
        Ok(topo)
    }

    fn transport(&self) -> Box<dyn Transport> {
        match self.entry {
            Some(addr) => Box::new(TcpTransport::new(addr)),
            None => chain(
                Box::new(InProcess(self.service.clone())),
                &self.hops,
                &self.capture,
                self.clock.clone(),
            ),
        }
    }
}

fn check_result(step: &Step, r: &StepResult, service_reason: &Option<String>, client: &Client) -> Vec<String> {
    let mut f = Vec::new();
    if r.verdict != step.expect {
        f.push(format!(
            "expected {:?}, got {:?}{}",
            step.expect,
            r.verdict,
            r.reason.as_deref().map(|x| format!(" ({x})")).unwrap_or_default()
        ));
    }
    if let Some(want) = &step.reason {
        if r.reason.as_ref() != Some(want) {
            f.push(format!("expected reason {want}, got {:?}", r.reason));
        }
    }
    if let Some(want) = &step.service_reason {
        if service_reason.as_ref() != Some(want) {
            f.push(format!("expected service reason {want}, got {service_reason:?}"));
        }
    }
    if let Some(want) = step.status {
        if r.status != Some(want) {
            f.push(format!("expected status {want}, got {:?}", r.status));
        }
    }
    if let Some(want) = &step.response_body {
        let got = r.body.as_deref().map(String::from_utf8_lossy);
        if got.as_deref() != Some(want.as_str()) {
            f.push(format!("expected body {want:?}, got {got:?}"));
        }
    }
    for (k, v) in &step.response_headers {
        if r.header(k) != Some(v.as_str()) {
            f.push(format!("expected header {k}: {v}, got {:?}", r.header(k)));
        }
    }
    if let Some(want) = step.exchanges {
        if r.exchanges != want {
            f.push(format!("expected {want} exchange(s), got {}", r.exchanges));
        }
    }
    if let Some(want) = step.options_sent {
        if client.options_sent() != want {
            f.push(format!("expected {want} OPTIONS sent, got {}", client.options_sent()));
        }
    }
    f
}

fn check_registry(
    want: &RegistryExpect,
    service: &Service,
    base: Option<&Vec<u8>>,
    bases: &BTreeMap<String, Vec<u8>>,
) -> Vec<String> {
    let mut f = Vec::new();
    let stats = service.registry().stats();
    let mut cmp = |what: &str, want: Option<usize>, got: usize| {
        if let Some(w) = want {
            if w != got {
                f.push(format!("{what}: expected {w}, got {got}"));
            }
        }
    };
    cmp("live_bases", want.live_bases, stats.live_bases);
    cmp("tombstones", want.tombstones, stats.tombstones);
    cmp("pool_size", want.pool_size, stats.pool_size);
    cmp("instances", want.instances, stats.instances);
    cmp("shareable_instances", want.shareable_instances, stats.shareable_instances);
    let reg = service.registry();
    if let Some(w) = &want.base_state {
        let got = state_name(base.and_then(|b| reg.base_state(b)));
        if got != w {
            f.push(format!("base_state: expected {w}, got {got}"));
        }
    }
    if let Some(w) = want.secret_count {
        let got = base.and_then(|b| reg.secret_count(b));
        if got != Some(w) {
            f.push(format!("secret_count: expected {w}, got {got:?}"));
        }
    }
    if let Some(other) = &want.same_instance_as {
        let mine = base.and_then(|b| reg.instance_of(b));
        let theirs = bases.get(other).and_then(|b| reg.instance_of(b));
        if mine.is_none() || mine != theirs {
            f.push(format!("same_instance_as {other}: {mine:?} vs {theirs:?}"));
        }
    }
    f
}

/// Byte strings that must never cross a middlebox in the clear.
fn sensitive(s: &Scenario) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = s
        .service
        .handshake_secrets
        .iter()
        .map(|x| ("handshake secret".to_string(), x.as_bytes().to_vec()))
        .collect();
    for step in &s.steps {
        if let StepAction::Client(ClientAction::Atsp { secrets, .. }) = &step.action {
            out.extend(secrets.iter().map(|x| ("provisioned secret".to_string(), x.as_bytes().to_vec())));
        }
    }
    out
}

pub fn run_scenario(s: &Scenario) -> Result<Report, EnvironmentFailure> {
    run_scenario_with(s, &RunOptions::default())
}

pub fn run_scenario_with(s: &Scenario, opts: &RunOptions) -> Result<Report, EnvironmentFailure> {
    run_scenario_capturing(s, opts).map(|(r, _)| r)
}

/// Like `run_scenario_with`, but also hands back everything the middleboxes
/// saw.
pub fn run_scenario_capturing(s: &Scenario, opts: &RunOptions) -> Result<(Report, CaptureLog), EnvironmentFailure> {
    let started = Instant::now();
    let rng = ProtocolRng::seeded(s.seed);
    let topo = Topology::build(s, opts, &rng)?;
    let mut clients: BTreeMap<String, Client> = BTreeMap::new();
    for (name, cfg) in s.client_configs() {
        clients.insert(
            name,
            Client::new(cfg, topo.transport(), rng.fork(), topo.clock.clone()),
        );
    }
    let mut secrets = sensitive(s);
    let mut bases: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut steps = Vec::new();

    for (index, step) in s.steps.iter().enumerate() {
        topo.service.take_events();
        let Some(client) = clients.get_mut(&step.client) else {
            return Err(EnvironmentFailure(format!("step {index}: no client named {}", step.client)));
        };
        let (result, failures) = match &step.action {
            StepAction::Client(action) => {
                let r = client.run(action);
                let service_reason = topo.service.take_events().into_iter().last().and_then(|e| e.reason);
                let failures = check_result(step, &r, &service_reason, client);
                if let Some(sess) = client.session() {
                    bases.insert(step.client.clone(), sess.base_id.clone());
                    for m in client.secret_material() {
                        if !secrets.iter().any(|(_, x)| *x == m) {
                            secrets.push(("session key material".into(), m));
                        }
                    }
                }
                (
                    StepReport {
                        index,
                        client: step.client.clone(),
                        action: action.name().into(),
                        verdict: r.verdict,
                        reason: r.reason.clone(),
                        status: r.status,
                        service_reason,
                        exchanges: r.exchanges,
                        passed: false,
                        failures: Vec::new(),
                    },
                    failures,
                )
            }
            StepAction::Harness(h) => {
                let failures = match h {
                    HarnessAction::AdvanceClock { secs } => {
                        topo.clock.advance(*secs);
                        Vec::new()
                    }
                    HarnessAction::AssertRegistry(want) => {
                        check_registry(want, &topo.service, bases.get(&step.client), &bases)
                    }
                };
                let verdict = if failures.is_empty() { Verdict::Accept } else { Verdict::Reject };
                (
                    StepReport {
                        index,
                        client: step.client.clone(),
                        action: step.action.name().into(),
                        verdict,
                        reason: None,
                        status: None,
                        service_reason: None,
                        exchanges: 0,
                        passed: false,
                        failures: Vec::new(),
                    },
                    failures,
                )
            }
        };
        let mut report = result;
        report.passed = failures.is_empty();
        report.failures = failures;
        steps.push(report);
    }

    let mut leaks = Vec::new();
    if s.scan_captures {
        for (what, bytes) in secrets.iter().filter(|(_, b)| b.len() >= 6) {
            for i in topo.capture.find(bytes) {
                leaks.push(format!("{what} found in capture record {i}"));
            }
        }
    }
    drop(topo.servers);
    let report = Report {
        name: s.name.clone(),
        passed: steps.iter().all(|x| x.passed) && leaks.is_empty(),
        hops: topo.hops.len(),
        transport: opts.transport.unwrap_or(s.transport),
        steps,
        leaks,
        captured_messages: topo.capture.len(),
        duration_ms: started.elapsed().as_millis(),
        transcripts: clients.into_iter().map(|(n, c)| (n, c.into_log())).collect(),
    };
    Ok((report, topo.capture))
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub reports: Vec<Report>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl Summary {
    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.errors.is_empty()
    }
}

pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, EnvironmentFailure> {
    let entries = std::fs::read_dir(dir).map_err(|e| EnvironmentFailure(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs every `*.json` scenario in `dir`, in name order.
pub fn run_all(dir: &Path, opts: &RunOptions) -> Result<Summary, EnvironmentFailure> {
    let mut summary = Summary {
        total: 0,
        passed: 0,
        failed: 0,
        reports: Vec::new(),
        errors: Vec::new(),
    };
    for path in scenario_files(dir)? {
        let scenario = Scenario::load(&path).map_err(EnvironmentFailure)?;
        let report = run_scenario_with(&scenario, opts)?;
        summary.total += 1;
        if report.passed {
            summary.passed += 1;
        } else {
            summary.failed += 1;
        }
        summary.reports.push(report);
    }
    Ok(summary)
}
