use serde::{Deserialize, Serialize};

use crate::attest::{AppraisalPolicy, AttestationMode, Identity, TrustAnchor};
use crate::crypto::{CipherSuite, NamedGroup};
use crate::handshake::{BaseCreation, BlockEntry, Policies, ReplayMode};
use crate::wire::names;

/// Code identity of a service instance; the measurement is derived from
/// `code`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentityConfig {
    pub code: String,
    pub isv_id: String,
    pub tee_id: String,
    pub svn: u64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            code: "httpa2-echo-service".into(),
            isv_id: "httpa2-isv".into(),
            tee_id: "tee".into(),
            svn: 1,
        }
    }
}

impl IdentityConfig {
    pub fn identity(&self) -> Identity {
        Identity::for_code(&self.code, &self.isv_id, &self.tee_id, self.svn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    pub versions: Vec<i64>,
    pub suites: Vec<String>,
    pub groups: Vec<String>,
    /// Serve plain HTTP requests; off unless explicitly enabled.
    pub allow_untrusted: bool,
    pub identity: IdentityConfig,
    /// Collaborating instances whose quotes accompany the contact quote.
    pub collaborators: Vec<IdentityConfig>,
    /// Pad encrypted response regions to this block size (0 = off).
    pub padding_block: usize,
    pub base_max_age: u64,
    pub max_instances: usize,
    pub preflight_max_age: u64,
    /// `Attest-*` fields advertised in preflight; `None` means all known.
    pub supported_headers: Option<Vec<String>>,
    /// Appraisal of client quotes in mutual mode.
    pub client_policy: AppraisalPolicy,
    pub require_client_quote: bool,
    /// Hex Ed25519 keys accepted in `Attest-Signatures`; empty accepts any
    /// key whose signature verifies.
    pub trusted_client_keys: Vec<String>,
    /// Delivered wrapped in the handshake response.
    pub handshake_secrets: Vec<String>,
    /// Attached as `max-age` on each quote.
    pub quote_max_age: Option<u64>,
    /// Behave as an ordinary HTTP server that knows nothing of ATTEST.
    pub plain: bool,
    /// Refuse handshakes whose `Attest-Date` is further than this from the
    /// service clock; unchecked when `None`.
    pub max_date_skew: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:0".into(),
            versions: vec![2],
            suites: CipherSuite::ALL.iter().map(|s| s.id().to_string()).collect(),
            groups: vec![NamedGroup::X25519.id().into(), NamedGroup::Secp256r1.id().into()],
            allow_untrusted: false,
            identity: IdentityConfig::default(),
            collaborators: Vec::new(),
            padding_block: 0,
            base_max_age: 3600,
            max_instances: 64,
            preflight_max_age: 600,
            supported_headers: None,
            client_policy: AppraisalPolicy::default(),
            require_client_quote: false,
            trusted_client_keys: Vec::new(),
            handshake_secrets: Vec::new(),
            quote_max_age: None,
            plain: false,
            max_date_skew: None,
        }
    }
}

impl ServiceConfig {
    pub fn cipher_suites(&self) -> Vec<CipherSuite> {
        self.suites.iter().filter_map(|s| CipherSuite::from_id(s)).collect()
    }

    pub fn named_groups(&self) -> Vec<NamedGroup> {
        self.groups.iter().filter_map(|g| NamedGroup::from_id(g)).collect()
    }

    pub fn advertised_headers(&self) -> Vec<String> {
        match &self.supported_headers {
            Some(h) => h.clone(),
            None => names::ALL.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    /// Authority sent in `Host`.
    pub host: String,
    /// Target of the handshake and provisioning requests.
    pub attest_target: String,
    pub versions: Vec<i64>,
    pub suites: Vec<String>,
    pub groups: Vec<String>,
    /// Groups to send key shares for; `None` means every offered group.
    pub share_groups: Option<Vec<String>>,
    pub attestation: AttestationMode,
    pub allow_untrusted_req: bool,
    pub replay: ReplayMode,
    pub base_creation: BaseCreation,
    /// Hex measurement, `code:<label>`, or an ISV/TEE id token.
    pub blocklist: Vec<String>,
    pub policy: AppraisalPolicy,
    /// Present a client quote (mutual mode).
    pub mhttpa: bool,
    /// Sign the request core with a client key.
    pub sign_request: bool,
    pub identity: IdentityConfig,
    pub padding_block: usize,
    /// Stop sending once any exchange is rejected.
    pub abort_on_reject: bool,
    /// Fields requested in preflight; `None` means the fields this client
    /// uses.
    pub preflight_headers: Option<Vec<String>>,
    /// Verifier anchors; `None` trusts the mock quoting root.
    pub anchors: Option<Vec<TrustAnchor>>,
    pub send_date: bool,
    pub transport: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            host: "localhost".into(),
            attest_target: "/".into(),
            versions: vec![2],
            suites: CipherSuite::ALL.iter().map(|s| s.id().to_string()).collect(),
            groups: vec![NamedGroup::X25519.id().into(), NamedGroup::Secp256r1.id().into()],
            share_groups: None,
            attestation: AttestationMode::Direct,
            allow_untrusted_req: false,
            replay: ReplayMode::Strict,
            base_creation: BaseCreation::New,
            blocklist: Vec::new(),
            policy: AppraisalPolicy::default(),
            mhttpa: false,
            sign_request: false,
            identity: IdentityConfig {
                code: "httpa2-client".into(),
                isv_id: "httpa2-client-isv".into(),
                tee_id: "client-tee".into(),
                svn: 1,
            },
            padding_block: 0,
            abort_on_reject: true,
            preflight_headers: None,
            anchors: None,
            send_date: true,
            transport: None,
        }
    }
}

impl ClientConfig {
    pub fn policies(&self) -> Policies {
        Policies {
            attestation: self.attestation,
            allow_untrusted_req: self.allow_untrusted_req,
            replay: self.replay,
        }
    }

    pub fn block_entries(&self) -> Vec<BlockEntry> {
        self.blocklist.iter().map(|b| BlockEntry::parse_config(b)).collect()
    }

    pub fn requested_headers(&self) -> Vec<String> {
        if let Some(h) = &self.preflight_headers {
            return h.clone();
        }
        let mut h = vec![
            names::VERSIONS,
            names::CIPHER_SUITES,
            names::SUPPORTED_GROUPS,
            names::KEY_SHARES,
            names::RANDOM,
            names::POLICIES,
            names::BASE_CREATION,
            names::BASE_ID,
            names::SECRETS,
            names::CARGO,
            names::TICKET,
        ];
        if !self.blocklist.is_empty() {
            h.push(names::BLOCKLIST);
        }
        if self.send_date {
            h.push(names::DATE);
        }
        if self.mhttpa {
            h.push(names::QUOTES);
        }
        if self.sign_request {
            h.push(names::SIGNATURES);
        }
        if self.transport.is_some() {
            h.push(names::TRANSPORT);
        }
        h.into_iter().map(str::to_string).collect()
    }
}
