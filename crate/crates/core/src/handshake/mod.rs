//! The one-round-trip attest handshake: key exchange, attest base
//! allocation and quote exchange.

mod client;
mod fields;
mod registry;
mod service;

pub use client::{client_begin, client_finish, ClientHandshake};
pub use fields::{
    read_quotes, AthsRequestFields, AthsResponseFields, BaseCreation, BlockEntry, ClientSignature,
    FieldError, Policies, ReplayMode,
};
pub use registry::{
    lock, AllocationRequest, AttestBase, BaseHandle, BaseId, BaseState, Registry, RegistryError,
    RegistryStats, TerminationMethod,
};
pub use service::{service_handle_aths, HandshakeReject, ServiceEnv};
