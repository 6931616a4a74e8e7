use super::*;
use crate::attest::QService;
use crate::crypto::aead::audit;
use crate::crypto::ProtocolRng;
use crate::handshake::{
    client_begin, client_finish, lock, service_handle_aths, BaseHandle, Registry, ServiceEnv, TerminationMethod,
};
use crate::reason;
use crate::stack::{ClientConfig, ServiceConfig};
use crate::wire::{names, Field, Message};

fn pair(seed: u64, cfg: ClientConfig) -> (ClientSession, BaseHandle, Registry) {
    let config = ServiceConfig::default();
    let rng = ProtocolRng::seeded(seed);
    let registry = Registry::new(config.identity.identity(), 4, rng.fork());
    let quoter = QService::mock_root();
    let anchors = vec![quoter.anchor()];
    let (req, hs) = client_begin(&cfg, &quoter, None, &rng.fork(), 0);
    let env = ServiceEnv {
        config: &config,
        registry: &registry,
        quoter: &quoter,
        anchors: &anchors,
        rng: &rng,
        now: 0,
    };
    let (resp, base) = service_handle_aths(&req, &env).unwrap();
    let session = client_finish(hs, &resp, &anchors, &cfg.policy).unwrap();
    (session, base, registry)
}

fn echo(req: &AppRequest) -> AppResponse {
    AppResponse {
        status: 200,
        headers: vec![("X-Seen".into(), req.target.clone())],
        body: req.body.clone(),
        regions: req.regions.clone(),
    }
}

fn spec(body: &[u8], regions: Vec<Region>) -> TrrSpec {
    TrrSpec {
        target: "/echo".into(),
        body: body.to_vec(),
        regions,
        ..Default::default()
    }
}

fn round_trip(
    s: &mut ClientSession,
    base: &BaseHandle,
    spec: &TrrSpec,
) -> Result<ResponseView, String> {
    let (req, pending) = s.trr_request(spec).map_err(|e| e.to_string())?;
    let handled = handle_trr(&mut lock(base), &req, &echo, 0).map_err(|r| r.reason.to_string())?;
    s.finish(pending, &handled.response)
}

#[test]
fn tickets_count_up_from_one() {
    let (mut s, base, _) = pair(1, ClientConfig::default());
    for expect in 1..=3u64 {
        let (req, p) = s.trr_request(&spec(b"x", vec![])).unwrap();
        assert_eq!(p.ticket.seq, expect);
        assert!(req.trailers.last().unwrap().is_named(names::TICKET));
        let h = handle_trr(&mut lock(&base), &req, &echo, 0).unwrap();
        assert_eq!(h.ticket.seq, expect);
        s.finish(p, &h.response).unwrap();
    }
    assert_eq!(lock(&base).recv_counter.last(), 3);
}

#[test]
fn ticket_rejections() {
    let (mut s, base, _) = pair(2, ClientConfig::default());
    let (req, _) = s.trr_request(&spec(b"hello", vec![])).unwrap();
    let reject = |m: &Message| handle_trr(&mut lock(&base), m, &echo, 0).unwrap_err().reason;

    let mut other_base = req.clone();
    other_base.headers[1].value[3] ^= 0x01;
    assert_eq!(reject(&other_base), reason::BAD_MAC);

    let mut retarget = req.clone();
    retarget.start = Message::request("POST", "/other").start;
    assert_eq!(reject(&retarget), reason::BAD_MAC);

    let mut stripped = req.clone();
    stripped.trailers.clear();
    assert_eq!(reject(&stripped), reason::MISSING_TICKET);

    let mut moved = req.clone();
    let t = moved.trailers.pop().unwrap();
    moved.headers.push(t);
    assert_eq!(reject(&moved), reason::MISSING_TICKET);

    let mut doubled = req.clone();
    let t = doubled.trailers[0].clone();
    doubled.trailers.insert(0, t);
    assert_eq!(reject(&doubled), reason::BAD_MAC);

    // nothing above moved the counter
    assert_eq!(lock(&base).recv_counter.last(), 0);
    handle_trr(&mut lock(&base), &req, &echo, 0).unwrap();
    assert_eq!(reject(&req), reason::REPLAY);
}

#[test]
fn lenient_mode_accepts_gaps() {
    let cfg = ClientConfig {
        replay: crate::handshake::ReplayMode::Lenient,
        ..Default::default()
    };
    let (mut s, base, _) = pair(3, cfg);
    let (r1, _) = s.trr_request(&spec(b"", vec![])).unwrap();
    let (r2, _) = s.trr_request(&spec(b"", vec![])).unwrap();
    let (r3, _) = s.trr_request(&spec(b"", vec![])).unwrap();
    handle_trr(&mut lock(&base), &r3, &echo, 0).unwrap();
    assert!(handle_trr(&mut lock(&base), &r1, &echo, 0).is_err());
    assert!(handle_trr(&mut lock(&base), &r2, &echo, 0).is_err());
    assert!(handle_trr(&mut lock(&base), &r3, &echo, 0).is_err());
}

#[test]
fn strict_mode_rejects_gaps() {
    let (mut s, base, _) = pair(4, ClientConfig::default());
    let (_, _) = s.trr_request(&spec(b"", vec![])).unwrap();
    let (r2, _) = s.trr_request(&spec(b"", vec![])).unwrap();
    assert_eq!(
        handle_trr(&mut lock(&base), &r2, &echo, 0).unwrap_err().reason,
        reason::REPLAY
    );
}

#[test]
fn binder_checks() {
    let (mut s, base, _) = pair(5, ClientConfig::default());
    let (q1, p1) = s.trr_request(&spec(b"one", vec![])).unwrap();
    let (q2, p2) = s.trr_request(&spec(b"two", vec![])).unwrap();
    let h1 = handle_trr(&mut lock(&base), &q1, &echo, 0).unwrap();
    let h2 = handle_trr(&mut lock(&base), &q2, &echo, 0).unwrap();

    // a binder belongs to exactly one request
    let mut swapped = h1.response.clone();
    *swapped.trailers.last_mut().unwrap() = h2.response.trailers.last().unwrap().clone();
    assert_eq!(s.finish(p1.clone(), &swapped).unwrap_err(), reason::BAD_BINDER);

    let mut stripped = h1.response.clone();
    stripped.trailers.pop();
    assert_eq!(s.finish(p1.clone(), &stripped).unwrap_err(), reason::MISSING_BINDER);

    // ordinary headers are outside the binder's coverage
    let mut edited = h1.response.clone();
    edited.headers[0].value.push(b'!');
    assert!(s.finish(p1.clone(), &edited).is_ok());

    let mut extra = h1.response.clone();
    extra.headers.push(Field::new("Attest-Extension", "1"));
    assert_eq!(s.finish(p1.clone(), &extra).unwrap_err(), reason::BAD_BINDER);

    assert_eq!(s.finish(p1, &h1.response).unwrap().body, b"one");
    assert_eq!(s.finish(p2, &h2.response).unwrap().body, b"two");
}

#[test]
fn cargo_shapes_round_trip() {
    let (mut s, base, _) = pair(6, ClientConfig::default());
    let (q, p) = s.atsp_request("/", &[b"k0-secret".as_slice()], None).unwrap();
    let h = handle_atsp(&mut lock(&base), &q).unwrap();
    s.finish(p, &h.response).unwrap();

    let body = b"0123456789abcdefghijklmnopqrstuvwxyz";
    let cases = vec![
        vec![],
        vec![Region::encrypted(0, body.len(), -1)],
        vec![Region::encrypted(4, 8, 0)],
        vec![Region::signed(0, 10, -1), Region::encrypted(20, 5, 0)],
        vec![Region::encrypted(30, 6, -1), Region::encrypted(0, 1, -1)],
        vec![Region::encrypted(3, 0, -1)],
    ];
    for regions in cases {
        let (req, pending) = s.trr_request(&spec(body, regions.clone())).unwrap();
        if regions.len() == 1 && regions[0].length == body.len() {
            assert!(!req.body.windows(4).any(|w| body.windows(4).any(|b| b == w)));
        }
        let h = handle_trr(&mut lock(&base), &req, &echo, 0).unwrap();
        let view = s.finish(pending, &h.response).unwrap();
        assert_eq!(view.body, body);
        let mut sorted = regions.clone();
        sorted.sort_by_key(|r| r.offset);
        assert_eq!(view.regions, sorted);
    }
}

#[test]
fn signed_region_stays_readable_but_bound() {
    let (mut s, base, _) = pair(7, ClientConfig::default());
    let body = b"visible text";
    let (mut req, _) = s.trr_request(&spec(body, vec![Region::signed(0, 7, -1)])).unwrap();
    assert_eq!(req.body, body);
    req.body[0] = b'V';
    assert_eq!(
        handle_trr(&mut lock(&base), &req, &echo, 0).unwrap_err().reason,
        reason::AEAD_FAILURE
    );
}

#[test]
fn padding_hides_length() {
    let cfg = ClientConfig {
        padding_block: 32,
        ..Default::default()
    };
    let (mut s, base, _) = pair(8, cfg);
    let mut lens = Vec::new();
    for n in [1usize, 7, 20] {
        let body = vec![b'a'; n];
        let (req, p) = s.trr_request(&spec(&body, vec![Region::encrypted(0, n, -1)])).unwrap();
        lens.push(req.body.len());
        let h = handle_trr(&mut lock(&base), &req, &echo, 0).unwrap();
        assert_eq!(s.finish(p, &h.response).unwrap().body, body);
    }
    assert!(lens.windows(2).all(|w| w[0] == w[1]), "{lens:?}");
}

#[test]
fn bad_layouts_refused_locally() {
    let (mut s, _, _) = pair(9, ClientConfig::default());
    let overlap = spec(b"0123456789", vec![Region::encrypted(0, 5, -1), Region::encrypted(4, 2, -1)]);
    assert!(s.trr_request(&overlap).is_err());
    let oob = spec(b"0123", vec![Region::encrypted(2, 5, -1)]);
    assert!(s.trr_request(&oob).is_err());
    let unknown = spec(b"0123", vec![Region::encrypted(0, 2, 3)]);
    assert!(s.trr_request(&unknown).is_err());
}

#[test]
fn cargo_tampering_detected() {
    let (mut s, base, _) = pair(10, ClientConfig::default());
    let (req, _) = s
        .trr_request(&spec(b"secret-payload", vec![Region::encrypted(0, 14, -1)]))
        .unwrap();
    let mut flipped = req.clone();
    flipped.body[2] ^= 0x01;
    assert_eq!(
        handle_trr(&mut lock(&base), &flipped, &echo, 0).unwrap_err().reason,
        reason::AEAD_FAILURE
    );
    let mut no_cargo = req.clone();
    no_cargo.trailers.retain(|f| !f.is_named(names::CARGO));
    // the ticket covers the cargo line
    assert_eq!(
        handle_trr(&mut lock(&base), &no_cargo, &echo, 0).unwrap_err().reason,
        reason::BAD_MAC
    );
}

#[test]
fn provisioning_appends_in_order() {
    let (mut s, base, _) = pair(11, ClientConfig::default());
    for batch in [vec!["a1", "a2"], vec!["b1"]] {
        let (q, p) = s.atsp_request("/", &batch, None).unwrap();
        let h = handle_atsp(&mut lock(&base), &q).unwrap();
        s.finish(p, &h.response).unwrap();
    }
    let b = lock(&base);
    let store: Vec<&[u8]> = b.secret_store.iter().map(|v| v.as_slice()).collect();
    assert_eq!(store, vec![&b"a1"[..], b"a2", b"b1"]);
    assert_eq!(s.provisioned_count(), 3);
}

#[test]
fn corrupt_secret_destroys() {
    let (mut s, base, _) = pair(12, ClientConfig::default());
    let (q, _) = s.atsp_request("/", &["good", "bad"], Some(1)).unwrap();
    let r = handle_atsp(&mut lock(&base), &q).unwrap_err();
    assert_eq!(r.status, 403);
    assert_eq!(r.reason, reason::SECRET_REJECTED);
    assert_eq!(r.terminate, Some(TerminationMethod::Destroy));
    assert!(lock(&base).secret_store.is_empty());
}

#[test]
fn termination_request_is_reported() {
    let (mut s, base, _) = pair(13, ClientConfig::default());
    let mut sp = spec(b"", vec![]);
    sp.termination = Some(TerminationMethod::Keep);
    let (q, _) = s.trr_request(&sp).unwrap();
    let h = handle_trr(&mut lock(&base), &q, &echo, 0).unwrap();
    assert_eq!(h.terminate, Some(TerminationMethod::Keep));

    let (mut q, _) = s.trr_request(&spec(b"", vec![])).unwrap();
    q.headers.push(Field::new(names::BASE_TERMINATION, "explode"));
    assert!(handle_trr(&mut lock(&base), &q, &echo, 0).is_err());
}

#[test]
fn no_nonce_reuse_across_a_session() {
    audit::begin();
    let (mut s, base, _) = pair(14, ClientConfig::default());
    let (q, p) = s.atsp_request("/", &["s0", "s1"], None).unwrap();
    let h = handle_atsp(&mut lock(&base), &q).unwrap();
    s.finish(p, &h.response).unwrap();
    for i in 0..20 {
        let body = vec![i as u8; 64];
        let regions = vec![
            Region::encrypted(0, 16, -1),
            Region::signed(16, 16, 0),
            Region::encrypted(32, 16, 1),
        ];
        round_trip(&mut s, &base, &spec(&body, regions)).unwrap();
    }
    let report = audit::finish();
    assert!(report.seals > 100);
    assert_eq!(report.reused, 0);
}
