use super::fields::{AthsRequestFields, AthsResponseFields, FieldError};
use super::registry::{lock, AllocationRequest, BaseHandle, BaseState, Registry};
use crate::attest::{
    appraise_quotes, compute_qudd, verify_ed25519, Appraisal, AttestationMode, QService, Quote,
    TrustAnchor,
};
use crate::crypto::{
    derive_key_schedule, derive_shared_secret, generate_key_share, negotiate_suite,
    transcript_hash, NamedGroup, ProtocolRng, RandomNonce,
};
use crate::reason;
use crate::session::{wrap_secrets, Direction};
use crate::stack::ServiceConfig;
use crate::wire::{
    attest_fields, canonical_transcript, names, transcript_of_fields, BareItem, Message,
};

/// What the service needs to answer a handshake.
pub struct ServiceEnv<'a> {
    pub config: &'a ServiceConfig,
    pub registry: &'a Registry,
    pub quoter: &'a QService,
    /// Anchors for verifying client quotes.
    pub anchors: &'a [TrustAnchor],
    pub rng: &'a ProtocolRng,
    pub now: u64,
}

/// A refused handshake. No base survives a refusal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeReject {
    pub status: u16,
    pub reason: &'static str,
}

fn reject(status: u16, reason: &'static str) -> HandshakeReject {
    HandshakeReject { status, reason }
}

/// Client quotes and signatures, checked before anything is allocated.
fn check_client_evidence(
    req: &Message,
    fields: &AthsRequestFields,
    env: &ServiceEnv<'_>,
) -> Result<(), HandshakeReject> {
    if fields.client_quotes.is_empty() && fields.signatures.is_empty() {
        return if env.config.require_client_quote {
            Err(reject(403, reason::CLIENT_QUOTE_REJECTED))
        } else {
            Ok(())
        };
    }
    let core = transcript_of_fields(
        attest_fields(req).filter(|f| !f.is_named(names::QUOTES) && !f.is_named(names::SIGNATURES)),
    );
    if !fields.client_quotes.is_empty() || env.config.require_client_quote {
        let expected = compute_qudd(&core, b"");
        if let Appraisal::Reject(r) = appraise_quotes(
            &fields.client_quotes,
            env.anchors,
            &env.config.client_policy,
            AttestationMode::Direct,
            &expected,
            fields.random.as_bytes(),
        ) {
            log::info!("client quote rejected: {r}");
            return Err(reject(403, reason::CLIENT_QUOTE_REJECTED));
        }
    }
    for sig in &fields.signatures {
        let trusted = env.config.trusted_client_keys.is_empty()
            || env
                .config
                .trusted_client_keys
                .iter()
                .any(|k| k.eq_ignore_ascii_case(&hex::encode(sig.public_key)));
        if !trusted || !verify_ed25519(&sig.public_key, &core, &sig.signature) {
            return Err(reject(403, reason::CLIENT_SIGNATURE_REJECTED));
        }
    }
    Ok(())
}

/// Key exchange, base allocation and quote exchange in one response.
pub fn service_handle_aths(
    req: &Message,
    env: &ServiceEnv<'_>,
) -> Result<(Message, BaseHandle), HandshakeReject> {
    let fields = AthsRequestFields::from_message(req).map_err(|e| {
        log::debug!("handshake request unreadable: {e}");
        match e {
            FieldError::Missing(_) | FieldError::Malformed(_) => {
                reject(400, reason::MALFORMED_HANDSHAKE)
            }
        }
    })?;
    if [names::SECRETS, names::CARGO, names::TICKET, names::BASE_ID]
        .iter()
        .any(|n| req.has_field(n))
    {
        return Err(reject(400, reason::MALFORMED_HANDSHAKE));
    }
    if let (Some(skew), Some(date)) = (env.config.max_date_skew, fields.date) {
        if date.abs_diff(env.now as i64) > skew {
            return Err(reject(400, reason::MALFORMED_HANDSHAKE));
        }
    }
    check_client_evidence(req, &fields, env)?;

    let cfg = env.config;
    let version = fields
        .versions
        .iter()
        .copied()
        .find(|v| cfg.versions.contains(v))
        .ok_or(reject(400, reason::NEGOTIATION_FAILURE))?;
    let suite = negotiate_suite(&fields.cipher_suites, &cfg.cipher_suites())
        .map_err(|_| reject(400, reason::NEGOTIATION_FAILURE))?;
    // only groups the client actually sent a share for are usable
    let supported = cfg.named_groups();
    let (group, client_share) = fields
        .supported_groups
        .iter()
        .filter_map(|g| NamedGroup::from_id(g))
        .filter(|g| supported.contains(g))
        .find_map(|g| {
            fields
                .key_shares
                .iter()
                .find(|s| s.group == g.id())
                .map(|s| (g, s.public.clone()))
        })
        .ok_or(reject(400, reason::NEGOTIATION_FAILURE))?;

    let own_share = generate_key_share(group, env.rng);
    let shared = derive_shared_secret(&own_share, &client_share)
        .map_err(|_| reject(400, reason::INVALID_KEY_SHARE))?;
    let request_transcript = transcript_of_fields(attest_fields(req));
    let service_random = RandomNonce::generate(env.rng);
    let keys = derive_key_schedule(
        suite,
        &shared,
        &fields.random,
        &service_random,
        &transcript_hash(&request_transcript),
    );

    let base = env
        .registry
        .allocate_base(AllocationRequest {
            creation: fields.base_creation,
            blocklist: &fields.blocklist,
            keys: keys.clone(),
            policies: fields.policies,
            now: env.now,
            max_age: cfg.base_max_age,
        })
        .map_err(|_| reject(503, reason::RESOURCE_EXHAUSTED))?;
    let (base_id, identity) = {
        let b = lock(&base);
        (b.base_id, b.identity.clone())
    };

    let secrets = match wrap_secrets(&keys, Direction::Service, 0, &cfg.handshake_secrets) {
        Ok(s) => s,
        Err(_) => {
            env.registry.release(&base_id);
            return Err(reject(503, reason::RESOURCE_EXHAUSTED));
        }
    };
    let mut out = AthsResponseFields {
        version,
        cipher_suite: suite.id().to_string(),
        supported_group: group.id().to_string(),
        key_share: own_share.public().to_vec(),
        random: service_random,
        base_id: base_id.to_vec(),
        base_max_age: cfg.base_max_age,
        expires: env.now.saturating_add(cfg.base_max_age) as i64,
        transport: fields.transport.clone(),
        secrets,
        quotes: Vec::new(),
    };
    let covered = out.lines_before_quotes();
    let qudd = compute_qudd(&request_transcript, &canonical_transcript(&covered));
    let nonce = fields.random.as_bytes();
    out.quotes.push(env.quoter.generate_quote(&identity, qudd, nonce));
    for c in &cfg.collaborators {
        out.quotes.push(env.quoter.generate_quote(&c.identity(), qudd, nonce));
    }
    let mut quotes_line = out.quotes_line();
    if let Some(age) = cfg.quote_max_age {
        quotes_line = with_quote_max_age(&out.quotes, age);
    }

    let mut resp = Message::response(200);
    resp.headers.extend(covered.iter().map(|l| l.to_field()));
    resp.headers.push(quotes_line.to_field());
    lock(&base).state = BaseState::Active;
    Ok((resp, base))
}

fn with_quote_max_age(quotes: &[Quote], age: u64) -> crate::wire::AttestHeaderLine {
    let items = quotes
        .iter()
        .map(|q| q.to_item().with_param("max-age", BareItem::Integer(age as i64)))
        .collect();
    crate::wire::AttestHeaderLine::new(names::QUOTES, crate::wire::Value::List(items))
        .expect("quotes shape")
}
