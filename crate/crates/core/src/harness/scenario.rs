use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::handshake::BaseState;
use crate::middlebox::TamperRule;
use crate::stack::{ClientAction, ClientConfig, ServiceConfig, Verdict};

pub const DEFAULT_CLIENT: &str = "main";
pub const DEFAULT_START_TIME: u64 = 1_700_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Inprocess,
    Tcp,
}

/// A scripted run: one service, one or more clients, an optional middlebox
/// chain, and expectations for every step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default = "start_time")]
    pub start_time: u64,
    #[serde(default)]
    pub service: ServiceConfig,
    /// Named clients; empty means a single default client called `main`.
    #[serde(default)]
    pub clients: BTreeMap<String, ClientConfig>,
    /// Rules per middlebox, client side first. Empty is a direct connection.
    #[serde(default)]
    pub hops: Vec<Vec<TamperRule>>,
    pub steps: Vec<Step>,
    /// Fail if any secret or key byte string shows up in a capture.
    #[serde(default = "yes")]
    pub scan_captures: bool,
}

fn start_time() -> u64 {
    DEFAULT_START_TIME
}

fn yes() -> bool {
    true
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Scenario, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn client_configs(&self) -> BTreeMap<String, ClientConfig> {
        if self.clients.is_empty() {
            BTreeMap::from([(DEFAULT_CLIENT.to_string(), ClientConfig::default())])
        } else {
            self.clients.clone()
        }
    }
}

/// Steps that act on the harness rather than a client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum HarnessAction {
    AdvanceClock { secs: u64 },
    AssertRegistry(RegistryExpect),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepAction {
    Client(ClientAction),
    Harness(HarnessAction),
}

impl StepAction {
    pub fn name(&self) -> &'static str {
        match self {
            StepAction::Client(a) => a.name(),
            StepAction::Harness(HarnessAction::AdvanceClock { .. }) => "advance_clock",
            StepAction::Harness(HarnessAction::AssertRegistry(_)) => "assert_registry",
        }
    }
}

/// Registry facts checked by `assert_registry`. Base-specific checks refer
/// to the last base the step's client was attached to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistryExpect {
    pub live_bases: Option<usize>,
    pub tombstones: Option<usize>,
    pub pool_size: Option<usize>,
    pub instances: Option<usize>,
    pub shareable_instances: Option<usize>,
    /// `"absent"` once destroyed.
    pub base_state: Option<String>,
    pub secret_count: Option<usize>,
    /// Name of a client whose base must live on the same instance.
    pub same_instance_as: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    #[serde(default = "default_client")]
    pub client: String,
    #[serde(flatten)]
    pub action: StepAction,
    #[serde(default = "accept")]
    pub expect: Verdict,
    /// Client-side reason for a rejection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Reason the service recorded for this step's last request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    /// Expected (decrypted) response body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_body: Option<String>,
    /// Response headers that must be present with these values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub response_headers: BTreeMap<String, String>,
    /// Wire exchanges the step must take.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchanges: Option<usize>,
    /// Total OPTIONS requests the client has sent after this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options_sent: Option<usize>,
}

fn default_client() -> String {
    DEFAULT_CLIENT.into()
}

fn accept() -> Verdict {
    Verdict::Accept
}

pub(crate) fn state_name(s: Option<BaseState>) -> &'static str {
    match s {
        None => "absent",
        Some(BaseState::Allocated) => "allocated",
        Some(BaseState::Active) => "active",
        Some(BaseState::Expired) => "expired",
        Some(BaseState::Terminated) => "terminated",
    }
}
