//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use httpa2::attest::QService;
use httpa2::crypto::{
    derive_shared_secret, hkdf_expand, hkdf_extract, seal, CipherSuite, KeyShare, NamedGroup, ProtocolRng,
};
use httpa2::handshake::{client_begin, client_finish, lock, ReplayMode};
use httpa2::harness::{
    run_scenario, run_scenario_capturing, run_scenario_with, scenario_files, RunOptions, Scenario, StepAction,
    TransportKind,
};
use httpa2::middlebox::{apply_rule, Action, Applied, Direction, MatchClass, Selector, Stage, TamperRule};
use httpa2::session::{ClientSession, Region, TrrSpec};
use httpa2::stack::{
    Client, ClientAction, ClientConfig, InProcess, ManualClock, Service, ServiceConfig, Transport, TransportError,
    NOT_FOUND_BODY,
};
use httpa2::wire::{attest_fields, is_attest_name, Message};

/// Wall-clock budget for the whole suite.
const BUDGET: Duration = Duration::from_secs(300);
const HANDSHAKE_RUNS: usize = 100;
const MIN_MUTATIONS: usize = 50;
const REPLAY_DELIVERIES: usize = 1000;
const DOWNGRADE_RUNS: usize = 40;
const START: u64 = 1_700_000_000;

type Outcome = Result<String, String>;

fn corpus() -> Vec<Scenario> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    scenario_files(&dir)
        .expect("scenario directory")
        .iter()
        .map(|p| Scenario::load(p).expect("scenario parses"))
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Counts wire exchanges.
struct Counting {
    inner: InProcess,
    count: Arc<std::sync::atomic::AtomicUsize>,
}

impl Transport for Counting {
    fn exchange(&mut self, req: &Message) -> Result<Message, TransportError> {
        self.count.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.exchange(req)
    }
}

fn pick<T: Clone>(rng: &mut ChaCha8Rng, all: &[T]) -> Vec<T> {
    loop {
        let v: Vec<T> = all.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
        if !v.is_empty() {
            return v;
        }
    }
}

fn one_rtt_handshake(master: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let suites: Vec<String> = CipherSuite::ALL.iter().map(|s| s.id().to_string()).collect();
    let groups: Vec<String> = NamedGroup::ALL.iter().map(|g| g.id().to_string()).collect();
    let mut by_suite = BTreeMap::<String, usize>::new();
    for run in 0..HANDSHAKE_RUNS {
        let seed = rng.gen::<u64>();
        let service_cfg = ServiceConfig {
            suites: pick(&mut rng, &suites),
            groups: pick(&mut rng, &groups),
            ..ServiceConfig::default()
        };
        let mut client_cfg = ClientConfig {
            suites: service_cfg.suites.clone(),
            groups: pick(&mut rng, &groups),
            mhttpa: rng.gen_bool(0.3),
            sign_request: rng.gen_bool(0.3),
            ..ClientConfig::default()
        };
        client_cfg.suites.shuffle(&mut rng);
        client_cfg.groups.retain(|g| service_cfg.groups.contains(g));
        if client_cfg.groups.is_empty() {
            client_cfg.groups = service_cfg.groups.clone();
        }
        let prng = ProtocolRng::seeded(seed);
        let clock = Arc::new(ManualClock::new(START));
        let service = Arc::new(Service::new(service_cfg, prng.fork(), clock.clone()));
        let count = Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let transport = Counting {
            inner: InProcess(service.clone()),
            count: count.clone(),
        };
        let mut client = Client::new(client_cfg, Box::new(transport), prng.fork(), clock.clone());
        let r = client.handshake();
        ensure(r.accepted(), || format!("run {run} (seed {seed}): handshake rejected: {:?}", r.reason))?;
        let n = count.load(std::sync::atomic::Ordering::SeqCst);
        ensure(n == 1, || format!("run {run}: {n} round trips"))?;
        let session = client.session().expect("accepted handshake leaves a session");
        let base = service
            .registry()
            .lookup(&session.base_id, START)
            .map_err(|e| format!("run {run}: base missing on service: {e}"))?;
        ensure(lock(&base).keys == session.keys, || format!("run {run} (seed {seed}): key schedules differ"))?;
        *by_suite.entry(session.suite().id().to_string()).or_default() += 1;
    }
    Ok(format!("{HANDSHAKE_RUNS} randomized runs, 1 round trip each, keys equal; suites {by_suite:?}"))
}

fn crypto_vectors() -> Outcome {
    let prk = hkdf_extract(&hex::decode("000102030405060708090a0b0c").unwrap(), &[0x0b; 22]);
    let okm = hkdf_expand(&prk, &hex::decode("f0f1f2f3f4f5f6f7f8f9").unwrap(), 42);
    ensure(hex::encode(&okm[..8]) == "3cb25f25faacd57a", || format!("hkdf okm {}", hex::encode(&okm)))?;

    let alice = KeyShare::from_private(
        NamedGroup::X25519,
        &hex::decode("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a").unwrap(),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        hex::encode(alice.public()) == "8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a",
        || "x25519 public key".into(),
    )?;
    let bob_pub = hex::decode("de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f").unwrap();
    let shared = derive_shared_secret(&alice, &bob_pub).map_err(|e| e.to_string())?;
    ensure(
        hex::encode(&*shared) == "4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742",
        || "x25519 shared secret".into(),
    )?;

    let tag = seal(CipherSuite::Aes128GcmSha256, &[0; 16], &[0; 12], 0, b"", b"").map_err(|e| e.to_string())?;
    ensure(hex::encode(&tag) == "58e2fccefa7e3061367f1d57a4e7455a", || format!("gcm tag {}", hex::encode(&tag)))?;
    Ok("HKDF case 1, X25519 exchange and AES-128-GCM zero vector match".into())
}

// ---- tamper sweep ----------------------------------------------------------

const PREFIX: &str = "public-prefix:";
const SECRET: &str = "confidential-part";
const SUFFIX: &str = ":public-suffix";

fn sweep_scenario(rules: Vec<TamperRule>) -> Scenario {
    let v = json!({
        "name": "tamper-sweep",
        "seed": 4242,
        "hops": [rules],
        "steps": [
            {"action": "handshake"},
            {"action": "atsp", "secrets": ["sweep-provisioned-secret"]},
            {"action": "trr", "method": "POST", "target": "/echo", "body": "classified-body",
             "regions": [{"offset": 0, "length": 15}]},
            {"action": "trr", "method": "POST", "target": "/echo",
             "headers": {"X-Client-Note": "note"},
             "body": format!("{PREFIX}{SECRET}{SUFFIX}"),
             "regions": [{"offset": PREFIX.len(), "length": SECRET.len(), "key_index": 0}]}
        ]
    });
    serde_json::from_value(v).expect("sweep scenario")
}

/// One message of the baseline transaction as a middlebox saw it.
struct Observed {
    class: MatchClass,
    direction: Direction,
    nth: usize,
    msg: Message,
    /// Wire-body span (start, end) under cargo protection, if any.
    protected: Option<(usize, usize)>,
}

fn attest_view(m: &Message) -> Vec<(String, Vec<u8>)> {
    attest_fields(m).map(|f| (f.name.to_ascii_lowercase(), f.value.clone())).collect()
}

/// Whether an edit touched anything the protocol claims to protect.
fn touches_protected(before: &Observed, after: &Message) -> bool {
    if attest_view(&before.msg) != attest_view(after) {
        return true;
    }
    let (b, a) = (&before.msg.body, &after.body);
    if b == a {
        return false;
    }
    let Some((start, end)) = before.protected else {
        return false;
    };
    let in_prefix = a.len() == b.len() && a[start..] == b[start..];
    let in_suffix = a.len() >= end && a[..end] == b[..end];
    !(in_prefix || in_suffix)
}

fn mutations_for(o: &Observed) -> Vec<TamperRule> {
    let mut out = Vec::new();
    let rule = |target: Selector, action: Action| TamperRule {
        class: Some(o.class),
        direction: o.direction,
        target,
        action,
        nth: Some(o.nth),
    };
    let named = |name: &str, trailer: bool| {
        if trailer {
            Selector::Trailer(name.into())
        } else {
            Selector::Header(name.into())
        }
    };
    let sections = [(&o.msg.headers, false), (&o.msg.trailers, true)];
    for (fields, trailer) in sections {
        let mut seen = BTreeSet::new();
        for f in fields.iter() {
            if !seen.insert(f.name.to_ascii_lowercase()) {
                continue;
            }
            let sel = || named(&f.name, trailer);
            out.push(rule(sel(), Action::Drop));
            out.push(rule(sel(), Action::Flip));
            out.push(rule(sel(), Action::FlipAt(0)));
            out.push(rule(sel(), Action::Duplicate));
            out.push(rule(sel(), Action::Reorder));
            if is_attest_name(&f.name) {
                out.push(rule(sel(), Action::AppendParam("x=1".into())));
                for index in 0..2 {
                    let el = || Selector::ListElement {
                        field: f.name.clone(),
                        index,
                    };
                    out.push(rule(el(), Action::Drop));
                    out.push(rule(el(), Action::Reorder));
                    out.push(rule(el(), Action::Flip));
                }
            } else {
                out.push(rule(sel(), Action::Set("rewritten".into())));
            }
        }
    }
    let len = o.msg.body.len();
    if len > 0 {
        let mut offsets = vec![0, len / 2, len - 1];
        if let Some((s, e)) = o.protected {
            offsets.extend([s, s + 1, e - 1, e.min(len - 1)]);
        }
        offsets.sort_unstable();
        offsets.dedup();
        for off in offsets {
            out.push(rule(Selector::Body { offset: off, length: 1 }, Action::Flip));
        }
        out.push(rule(Selector::Body { offset: len - 1, length: 1 }, Action::Drop));
        out.push(rule(Selector::Body { offset: len, length: 0 }, Action::Set("!".into())));
        out.push(rule(Selector::Body { offset: 0, length: 2 }, Action::Duplicate));
    }
    out.push(rule(Selector::Message, Action::ReplayPrevious));
    out
}

fn observe_baseline() -> Result<Vec<Observed>, String> {
    let (report, capture) = run_scenario_capturing(&sweep_scenario(Vec::new()), &RunOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(report.passed, || format!("baseline failed:\n{}", report.to_text()))?;
    let mut seen = BTreeMap::<String, usize>::new();
    let mut out = Vec::new();
    let mut class = None;
    for rec in capture.records() {
        if rec.stage != Stage::Received {
            continue;
        }
        let msg = rec.parsed.clone().ok_or("unparsed capture record")?;
        if rec.direction == Direction::Request {
            class = MatchClass::of(&msg);
        }
        let class = class.ok_or("unclassified request")?;
        let nth = seen.entry(format!("{class:?} {:?}", rec.direction)).or_default();
        *nth += 1;
        let protected = match (class, *nth) {
            (MatchClass::Trr, 1) => Some((0, msg.body.len())),
            (MatchClass::Trr, 2) => Some((PREFIX.len(), msg.body.len() - SUFFIX.len())),
            _ => None,
        };
        out.push(Observed {
            class,
            direction: rec.direction,
            nth: *nth,
            msg,
            protected,
        });
    }
    ensure(out.len() == 8, || format!("expected 4 exchanges, saw {} messages", out.len()))?;
    Ok(out)
}

fn tamper_sweep() -> Outcome {
    let observed = observe_baseline()?;
    let (mut protected, mut unprotected) = (0usize, 0usize);
    let mut reasons = BTreeMap::<String, usize>::new();
    let mut problems = Vec::new();
    for o in &observed {
        for rule in mutations_for(o) {
            let mut edited = o.msg.clone();
            let effect = match apply_rule(&rule, &mut edited) {
                Applied::NoTarget => continue,
                Applied::Dropped => true,
                // the first message of a class has nothing to replay
                Applied::Replay if o.nth == 1 => continue,
                Applied::Replay => true,
                Applied::Edited if edited == o.msg => continue,
                Applied::Edited => touches_protected(o, &edited),
            };
            let report = run_scenario(&sweep_scenario(vec![rule.clone()])).map_err(|e| e.to_string())?;
            let rejections: Vec<_> = report
                .steps
                .iter()
                .filter(|s| s.reason.is_some() && s.reason.as_deref() != Some(httpa2::reason::ABORTED))
                .collect();
            let label = || format!("{:?} {:?} #{} {:?} {:?}", o.class, o.direction, o.nth, rule.target, rule.action);
            if effect {
                protected += 1;
                match rejections.as_slice() {
                    [one] => {
                        let why = one.service_reason.clone().or(one.reason.clone()).unwrap_or_default();
                        *reasons.entry(why).or_default() += 1;
                    }
                    [] => problems.push(format!("accepted: {}", label())),
                    many => problems.push(format!("{} rejections: {}", many.len(), label())),
                }
            } else {
                unprotected += 1;
                if !rejections.is_empty() {
                    problems.push(format!(
                        "unprotected edit rejected ({:?}): {}",
                        rejections[0].reason,
                        label()
                    ));
                }
            }
        }
    }
    ensure(problems.is_empty(), || {
        format!("{} problem(s):\n    {}", problems.len(), problems.join("\n    "))
    })?;
    ensure(protected >= MIN_MUTATIONS, || format!("only {protected} protected mutations"))?;
    Ok(format!(
        "{protected} protected mutations each rejected once, {unprotected} unprotected edits accepted; reasons {reasons:?}"
    ))
}

// ---- replay ------------------------------------------------------------------

fn direct_session(service: &Service, cfg: &ClientConfig, rng: &ProtocolRng) -> Result<ClientSession, String> {
    let quoter = QService::mock_root();
    let (req, state) = client_begin(cfg, &quoter, None, rng, service.now());
    let resp = service.handle(&req);
    client_finish(state, &resp, &[quoter.anchor()], &cfg.policy)
}

fn replay_checks(master: u64) -> Outcome {
    // a byte-identical resend through the full stack
    let scenario: Scenario = serde_json::from_value(json!({
        "name": "resend",
        "seed": master,
        "hops": [[]],
        "steps": [
            {"action": "handshake"},
            {"action": "trr", "method": "POST", "body": "once only", "regions": [{"offset": 0, "length": 9}]},
            {"action": "resend_last", "expect": "reject", "service_reason": "replay"}
        ]
    }))
    .unwrap();
    let r = run_scenario(&scenario).map_err(|e| e.to_string())?;
    ensure(r.passed, || format!("resend not refused as replay:\n{}", r.to_text()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let mut delivered = 0;
    let (mut accepted, mut rejected) = (0, 0);
    while delivered < REPLAY_DELIVERIES {
        let prng = ProtocolRng::seeded(rng.gen());
        let clock = Arc::new(ManualClock::new(START));
        let service = Service::new(ServiceConfig::default(), prng.fork(), clock);
        let strict = rng.gen_bool(0.75);
        let cfg = ClientConfig {
            replay: if strict { ReplayMode::Strict } else { ReplayMode::Lenient },
            ..ClientConfig::default()
        };
        let mut session = direct_session(&service, &cfg, &prng)?;
        let spec = TrrSpec {
            method: "POST".into(),
            target: "/echo".into(),
            headers: Vec::new(),
            body: b"sequenced".to_vec(),
            regions: vec![Region::encrypted(0, 9, -1)],
            termination: None,
        };
        let mut requests = Vec::new();
        for seq in 1..=40u64 {
            let (req, _) = session.trr_request(&spec).map_err(|e| e.to_string())?;
            requests.push((seq, req));
        }
        // a permutation plus some exact duplicates
        let mut order: Vec<usize> = (0..requests.len()).collect();
        order.shuffle(&mut rng);
        for _ in 0..10 {
            let at = rng.gen_range(0..=order.len());
            let dup = order[rng.gen_range(0..order.len())];
            order.insert(at, dup);
        }
        let mut last = 0u64;
        let mut used = BTreeSet::new();
        for i in order {
            if delivered == REPLAY_DELIVERIES {
                break;
            }
            delivered += 1;
            let (seq, req) = &requests[i];
            let resp = service.handle(req);
            let event = service.take_events().pop().ok_or("no service event")?;
            let want = if strict { *seq == last + 1 } else { *seq > last };
            let got = resp.status() == Some(200);
            ensure(got == want, || {
                format!("seq {seq} after {last} ({}): got status {:?}", cfg.replay.as_str(), resp.status())
            })?;
            if got {
                ensure(used.insert(*seq), || format!("seq {seq} accepted twice"))?;
                last = *seq;
                accepted += 1;
            } else {
                ensure(event.reason.as_deref() == Some(httpa2::reason::REPLAY), || {
                    format!("seq {seq} refused with {:?}", event.reason)
                })?;
                rejected += 1;
            }
        }
    }
    Ok(format!(
        "resend refused as replay; {delivered} shuffled deliveries agree with the sequence model ({accepted} accepted, {rejected} refused)"
    ))
}

// ---- downgrade ---------------------------------------------------------------

fn downgrade(master: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let strip = TamperRule::new(
        MatchClass::AtrAths,
        Direction::Request,
        Selector::ListElement {
            field: "Attest-Cipher-Suites".into(),
            index: 0,
        },
        Action::Drop,
    );
    let mut mutual_runs = 0;
    for run in 0..DOWNGRADE_RUNS {
        let mut suites: Vec<String> = CipherSuite::ALL.iter().map(|s| s.id().to_string()).collect();
        suites.shuffle(&mut rng);
        let hops = rng.gen_range(1..=3usize);
        let at = rng.gen_range(0..hops);
        let mut chain: Vec<Vec<TamperRule>> = vec![Vec::new(); hops];
        chain[at].push(strip.clone());
        // with mutual attestation the client quote covers the offered
        // suites, so the service refuses the altered request before the
        // client ever checks the binding
        let mutual = rng.gen_bool(0.3);
        let step = if mutual {
            json!({"action": "handshake", "expect": "reject", "service_reason": "client-quote-rejected"})
        } else {
            json!({"action": "handshake", "expect": "reject", "reason": "qudd-mismatch"})
        };
        mutual_runs += usize::from(mutual);
        let s: Scenario = serde_json::from_value(json!({
            "name": "downgrade",
            "seed": rng.gen::<u64>(),
            "transport": if rng.gen_bool(0.2) { "tcp" } else { "inprocess" },
            "clients": {"main": {"suites": suites, "mhttpa": mutual}},
            "hops": chain,
            "steps": [step]
        }))
        .unwrap();
        let r = run_scenario(&s).map_err(|e| e.to_string())?;
        ensure(r.passed, || format!("run {run}: {}", r.to_text()))?;
    }
    Ok(format!(
        "{} one-sided strip-strongest-suite runs (1-3 hops, varied position) all end in qudd-mismatch; \
         {mutual_runs} mutual runs refused by the service",
        DOWNGRADE_RUNS - mutual_runs
    ))
}

// ---- confidentiality of captures ---------------------------------------------

fn no_leaks(all: &[Scenario]) -> Outcome {
    let mut records = 0;
    for s in all {
        let opts = RunOptions {
            extra_hops: 1,
            ..RunOptions::default()
        };
        let (report, capture) = run_scenario_capturing(s, &opts).map_err(|e| e.to_string())?;
        ensure(report.leaks.is_empty(), || format!("{}: {:?}", s.name, report.leaks))?;
        // plaintext of encrypted regions, too
        for step in &s.steps {
            let StepAction::Client(ClientAction::Trr(t)) = &step.action else {
                continue;
            };
            for region in t.regions.iter().filter(|r| r.kind == httpa2::session::RegionKind::Encrypted) {
                let Some(plain) = t.body.as_bytes().get(region.offset..region.offset + region.length) else {
                    continue;
                };
                if plain.len() >= 6 {
                    let hits = capture.find(plain);
                    ensure(hits.is_empty(), || {
                        format!("{}: region plaintext {:?} captured", s.name, String::from_utf8_lossy(plain))
                    })?;
                }
            }
        }
        records += capture.len();
    }
    Ok(format!("{} scenarios, {records} captured records, no secret, key or region plaintext", all.len()))
}

// ---- corrupted secret ----------------------------------------------------------

fn corrupt_secret() -> Outcome {
    let prng = ProtocolRng::seeded(77);
    let clock = Arc::new(ManualClock::new(START));
    let service = Arc::new(Service::new(ServiceConfig::default(), prng.fork(), clock.clone()));
    let cfg = ClientConfig {
        abort_on_reject: false,
        ..ClientConfig::default()
    };
    let mut client = Client::new(cfg, Box::new(InProcess(service.clone())), prng.fork(), clock.clone());
    ensure(client.handshake().accepted(), || "handshake".into())?;
    let base_id = client.session().unwrap().base_id.clone();
    let r = client.provision(&["good-secret", "mangled-secret"], Some(1));
    ensure(!r.accepted() && r.status == Some(403), || format!("corrupt provisioning: {r:?}"))?;
    ensure(service.registry().base_state(&base_id).is_none(), || "base survived".into())?;

    let probes = [
        ClientAction::Trr(httpa2::stack::TrrAction {
            method: "GET".into(),
            target: "/hello".into(),
            ..Default::default()
        }),
        ClientAction::Trr(httpa2::stack::TrrAction {
            method: "POST".into(),
            target: "/echo".into(),
            body: "after".into(),
            regions: vec![Region::encrypted(0, 5, -1)],
            ..Default::default()
        }),
        ClientAction::Atsp {
            secrets: vec!["retry".into()],
            corrupt: None,
        },
        ClientAction::ResendLast,
    ];
    let strip_date = |m: &Message| {
        let mut m = m.clone();
        m.remove_field("Date");
        m
    };
    for p in &probes {
        let r = client.run(p);
        let wire = client.log().last().and_then(|e| e.wire.last()).and_then(|w| w.response.clone());
        ensure(r.status == Some(404), || format!("{}: status {:?}", p.name(), r.status))?;
        ensure(r.body.as_deref() == Some(NOT_FOUND_BODY), || format!("{}: body {:?}", p.name(), r.body))?;
        let wire = wire.ok_or("no response recorded")?;
        ensure(wire.headers.iter().all(|(n, _)| !is_attest_name(n)), || {
            format!("{}: Attest fields on the 404", p.name())
        })?;
    }
    // the answer for a terminated base is indistinguishable from a never-issued one
    let probe = |id: &[u8]| {
        let mut req = Message::request("GET", "/hello");
        req.push_header("Attest-Base-ID", format!(":{}:", httpa2::wire::b64_encode(id)));
        service.handle(&req)
    };
    let (terminated, unknown_resp) = (probe(&base_id), probe(&[0xaa; 16]));
    ensure(strip_date(&terminated) == strip_date(&unknown_resp), || "404s differ".into())?;
    Ok(format!("base torn down; {} later requests all got the generic 404", probes.len()))
}

// ---- lifecycle -----------------------------------------------------------------

fn lifecycle(all: &[Scenario]) -> Outcome {
    let mut names = Vec::new();
    for wanted in ["lifecycle-cleanup", "lifecycle-destroy", "lifecycle-keep-shared"] {
        let s = all.iter().find(|s| s.name == wanted).ok_or(format!("{wanted} missing"))?;
        let asserts = s.steps.iter().filter(|x| x.action.name() == "assert_registry").count();
        ensure(asserts >= 1, || format!("{wanted}: no registry checks"))?;
        for transport in [TransportKind::Inprocess, TransportKind::Tcp] {
            let r = run_scenario_with(
                s,
                &RunOptions {
                    transport: Some(transport),
                    ..RunOptions::default()
                },
            )
            .map_err(|e| e.to_string())?;
            ensure(r.passed, || r.to_text())?;
        }
        names.push(format!("{wanted} ({asserts} registry checks)"));
    }
    Ok(names.join(", "))
}

// ---- preflight -------------------------------------------------------------------

fn preflight(all: &[Scenario]) -> Outcome {
    let supported = vec!["Attest-Versions".to_string(), "Attest-Random".into(), "Attest-Base-ID".into()];
    let clock = Arc::new(ManualClock::new(START));
    let service = Service::new(
        ServiceConfig {
            supported_headers: Some(supported),
            preflight_max_age: 300,
            ..ServiceConfig::default()
        },
        ProtocolRng::seeded(9),
        clock.clone(),
    );
    let mut req = Message::request("OPTIONS", "/");
    req.push_header("Access-Control-Request-Method", "ATTEST");
    req.push_header("Access-Control-Request-Headers", "attest-versions, Attest-Blocklist, attest-random, X-Custom");
    let resp = service.handle(&req);
    let tokens = |name: &str| -> BTreeSet<String> {
        resp.header_str(name)
            .unwrap_or_default()
            .split(',')
            .map(|t| t.trim().to_ascii_lowercase())
            .filter(|t| !t.is_empty())
            .collect()
    };
    ensure(tokens("Allow").contains("attest"), || "Allow lacks ATTEST".into())?;
    let allowed = tokens("Access-Control-Allow-Headers");
    ensure(!allowed.contains("attest-blocklist") && !allowed.contains("x-custom"), || {
        format!("unsupported fields allowed: {allowed:?}")
    })?;
    ensure(allowed.contains("attest-versions") && allowed.contains("attest-random"), || {
        format!("supported fields missing: {allowed:?}")
    })?;

    let service = Arc::new(Service::new(ServiceConfig::default(), ProtocolRng::seeded(10), clock.clone()));
    let max_age = service.config().preflight_max_age;
    let mut client = Client::new(
        ClientConfig::default(),
        Box::new(InProcess(service.clone())),
        ProtocolRng::seeded(11),
        clock.clone(),
    );
    ensure(client.preflight().accepted(), || "preflight".into())?;
    clock.advance(max_age - 1);
    ensure(client.preflight().exchanges == 0 && client.options_sent() == 1, || "cache not used".into())?;
    ensure(client.handshake().accepted(), || "handshake after cached preflight".into())?;
    clock.advance(1);
    client.preflight();
    ensure(client.options_sent() == 2, || "cache outlived max-age".into())?;

    for name in ["preflight-cache", "preflight-unsupported-field", "preflight-plain-server"] {
        let s = all.iter().find(|s| s.name == name).ok_or(format!("{name} missing"))?;
        let r = run_scenario(s).map_err(|e| e.to_string())?;
        ensure(r.passed, || r.to_text())?;
    }
    Ok(format!("ATTEST allowed, unsupported fields withheld, one OPTIONS per {max_age} s max-age"))
}

// ---- transparency -------------------------------------------------------------------

fn transparency(all: &[Scenario]) -> Outcome {
    let topologies = [
        ("direct", 0, TransportKind::Inprocess),
        ("1-hop", 1, TransportKind::Inprocess),
        ("2-hop", 2, TransportKind::Inprocess),
        ("2-hop tcp", 2, TransportKind::Tcp),
    ];
    let mut steps = 0;
    for s in all {
        let mut reference = None;
        for (label, extra_hops, transport) in topologies {
            let r = run_scenario_with(
                s,
                &RunOptions {
                    extra_hops,
                    transport: Some(transport),
                },
            )
            .map_err(|e| e.to_string())?;
            let v = r.verdicts();
            match &reference {
                None => {
                    steps += v.len();
                    reference = Some(v);
                }
                Some(first) => ensure(*first == v, || format!("{}: {label} verdicts differ", s.name))?,
            }
        }
    }
    Ok(format!(
        "{} scenarios ({steps} steps) give identical verdicts direct, via 1 hop and via 2 hops",
        all.len()
    ))
}

fn main() {
    let started = Instant::now();
    let master: u64 = std::env::var("ACCEPTANCE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| rand::thread_rng().gen());
    println!("acceptance seed {master} (set ACCEPTANCE_SEED to reproduce)");
    let all = corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 one-rtt-handshake", Box::new(move || one_rtt_handshake(master))),
        ("2 crypto-vectors", Box::new(crypto_vectors)),
        ("3 tamper-sweep", Box::new(tamper_sweep)),
        ("4 replay", Box::new(move || replay_checks(master))),
        ("5 downgrade", Box::new(move || downgrade(master))),
        ("6 capture-confidentiality", Box::new(|| no_leaks(&all))),
        ("7 corrupt-secret", Box::new(corrupt_secret)),
        ("8 lifecycle", Box::new(|| lifecycle(&all))),
        ("9 preflight", Box::new(|| preflight(&all))),
        ("10 transparency", Box::new(|| transparency(&all))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {p:?}")));
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({ms} ms): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} ({ms} ms): {why}");
            }
        }
    }
    let total = started.elapsed();
    if total > BUDGET {
        failed += 1;
        println!("FAIL suite took {total:?}, budget {BUDGET:?}");
    }
    println!("{} of {} criteria passed in {:.1} s", criteria.len() - failed.min(criteria.len()), criteria.len(), total.as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
