//! Reference endpoints: the service (preflight, dispatch, application
//! routing) and the client (preflight cache, handshake driver, session).

mod apps;
mod client;
mod clock;
mod config;
mod service;
mod transport;

pub use apps::{EchoApp, HELLO_BODY};
pub use client::{
    client_run, Client, ClientAction, PreflightResult, StepResult, TranscriptEntry, TranscriptLog, TrrAction,
    Verdict, WireExchange, WireRecord,
};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{ClientConfig, IdentityConfig, ServiceConfig};
pub use service::{generic_not_found, http_date, Service, ServiceEvent, NOT_FOUND_BODY};
pub use transport::{serve, spawn_listener, InProcess, ServerHandle, TcpTransport, Transport, TransportError};
