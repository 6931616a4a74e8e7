use ed25519_dalek::{Signer, SigningKey};
use zeroize::Zeroizing;

use super::fields::{read_quotes, AthsRequestFields, AthsResponseFields, ClientSignature, FieldError};
use crate::attest::{appraise_quotes, compute_qudd, Appraisal, AppraisalPolicy, QService, TrustAnchor};
use crate::crypto::{
    derive_key_schedule, derive_shared_secret, generate_key_share_for, transcript_hash, CipherSuite,
    KeyShare, NamedGroup, ProtocolRng, RandomNonce,
};
use crate::reason;
use crate::session::{unwrap_secrets, ClientSession, Direction, Established};
use crate::stack::ClientConfig;
use crate::wire::{
    attest_fields, canonical_transcript, names, transcript_of_fields, Message, ATTEST_METHOD,
};

/// What the client keeps between sending the handshake request and reading
/// the response.
pub struct ClientHandshake {
    pub fields: AthsRequestFields,
    shares: Vec<KeyShare>,
    /// Canonical transcript of the request exactly as sent.
    pub transcript: Vec<u8>,
    host: String,
    padding_block: usize,
}

impl std::fmt::Debug for ClientHandshake {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientHandshake")
            .field("fields", &self.fields)
            .finish_non_exhaustive()
    }
}

/// Builds the handshake request. In mutual mode the client quote covers the
/// core request lines and uses the client random as its nonce.
pub fn client_begin(
    cfg: &ClientConfig,
    quoter: &QService,
    signer: Option<&SigningKey>,
    rng: &ProtocolRng,
    now: u64,
) -> (Message, ClientHandshake) {
    let share_groups = cfg.share_groups.as_ref().unwrap_or(&cfg.groups);
    let shares: Vec<KeyShare> = share_groups
        .iter()
        .filter(|g| cfg.groups.contains(g))
        .filter_map(|g| generate_key_share_for(g, rng).ok())
        .collect();
    let mut fields = AthsRequestFields {
        versions: cfg.versions.clone(),
        cipher_suites: cfg.suites.clone(),
        supported_groups: cfg.groups.clone(),
        key_shares: shares.iter().map(KeyShare::public_share).collect(),
        random: RandomNonce::generate(rng),
        policies: cfg.policies(),
        base_creation: cfg.base_creation,
        blocklist: cfg.block_entries(),
        date: cfg.send_date.then_some(now as i64),
        transport: cfg.transport.as_ref().map(|t| t.as_bytes().to_vec()),
        client_quotes: Vec::new(),
        signatures: Vec::new(),
    };
    let core = canonical_transcript(&fields.core_lines());
    if cfg.mhttpa {
        let qudd = compute_qudd(&core, b"");
        fields.client_quotes =
            vec![quoter.generate_quote(&cfg.identity.identity(), qudd, fields.random.as_bytes())];
    }
    if let Some(key) = signer.filter(|_| cfg.sign_request) {
        fields.signatures = vec![ClientSignature {
            public_key: key.verifying_key().to_bytes(),
            signature: key.sign(&core).to_bytes().to_vec(),
        }];
    }
    let lines = fields.lines();
    let mut msg = Message::request(ATTEST_METHOD, cfg.attest_target.clone());
    if !cfg.host.is_empty() {
        msg.push_header("Host", cfg.host.clone());
    }
    msg.headers.extend(lines.iter().map(|l| l.to_field()));
    debug_assert!(!msg.has_field(names::SECRETS) && !msg.has_field(names::CARGO));
    let state = ClientHandshake {
        fields,
        shares,
        transcript: canonical_transcript(&lines),
        host: cfg.host.clone(),
        padding_block: cfg.padding_block,
    };
    (msg, state)
}

fn field_reason(e: FieldError) -> String {
    match e {
        FieldError::Missing(_) => reason::MISSING_FIELD.into(),
        FieldError::Malformed(_) => reason::MALFORMED_RESPONSE.into(),
    }
}

/// Nothing in the response is trusted until the quotes verify and appraise
/// against the transcripts this client saw.
pub fn client_finish(
    state: ClientHandshake,
    resp: &Message,
    anchors: &[TrustAnchor],
    policy: &AppraisalPolicy,
) -> Result<ClientSession, String> {
    let status = resp.status().ok_or_else(|| reason::MALFORMED_RESPONSE.to_string())?;
    if status != 200 {
        return Err(reason::status(status));
    }
    let quotes = read_quotes(resp).map_err(|e| match e {
        FieldError::Missing(_) => reason::MISSING_FIELD.to_string(),
        FieldError::Malformed(_) => reason::BAD_QUOTE.to_string(),
    })?;
    // the quotes cover the lines before them, so nothing may follow
    if attest_fields(resp).last().is_some_and(|f| !f.is_named(names::QUOTES)) {
        return Err(reason::MALFORMED_RESPONSE.into());
    }
    let response_transcript =
        transcript_of_fields(attest_fields(resp).filter(|f| !f.is_named(names::QUOTES)));
    let expected_qudd = compute_qudd(&state.transcript, &response_transcript);
    if let Appraisal::Reject(r) = appraise_quotes(
        &quotes,
        anchors,
        policy,
        state.fields.policies.attestation,
        &expected_qudd,
        state.fields.random.as_bytes(),
    ) {
        return Err(r.to_string());
    }

    let fields = AthsResponseFields::from_message(resp).map_err(field_reason)?;
    let offered = &state.fields;
    let suite = CipherSuite::from_id(&fields.cipher_suite)
        .filter(|_| offered.cipher_suites.contains(&fields.cipher_suite));
    let group = NamedGroup::from_id(&fields.supported_group);
    let share = state.shares.iter().find(|s| Some(s.group()) == group);
    let (Some(suite), Some(group), Some(share), true) =
        (suite, group, share, offered.versions.contains(&fields.version))
    else {
        return Err(reason::NEGOTIATION_MISMATCH.into());
    };
    let shared = derive_shared_secret(share, &fields.key_share)
        .map_err(|_| reason::INVALID_KEY_SHARE.to_string())?;
    let keys = derive_key_schedule(
        suite,
        &shared,
        &offered.random,
        &fields.random,
        &transcript_hash(&state.transcript),
    );
    let service_secrets: Vec<Zeroizing<Vec<u8>>> = if fields.secrets.is_empty() {
        Vec::new()
    } else {
        unwrap_secrets(&keys, Direction::Service, 0, &fields.secrets)
            .map_err(|_| reason::AEAD_FAILURE.to_string())?
    };
    let mut session = ClientSession::new(Established {
        base_id: fields.base_id,
        keys,
        version: fields.version,
        group,
        policies: offered.policies,
        max_age: fields.base_max_age,
        expires_at: fields.expires,
        quotes,
        service_secrets,
        host: state.host,
    });
    session.padding_block = state.padding_block;
    Ok(session)
}
