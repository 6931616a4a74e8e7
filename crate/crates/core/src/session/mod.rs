//! Post-handshake traffic: tickets, binders, trusted cargo, secret
//! provisioning and trusted requests.

mod cargo;
mod client;
mod keys;
mod secrets;
mod service;
mod ticket;

pub use cargo::{open_cargo, seal_cargo, CargoContext, CargoError, Region, RegionKind};
pub use client::{ClientSession, PendingRequest, ResponseView, SessionError, TrrSpec};
pub(crate) use client::Established;
pub use keys::{secret_cargo_key, sub_sequence, Direction, METADATA_SUBINDEX, SECRET_SUBINDEX};
pub use secrets::{unwrap_secrets, wrap_secrets};
pub use service::{handle_atsp, handle_trr, App, AppRequest, AppResponse, Handled, Rejection};
pub use ticket::{attach_binder, attach_ticket, validate_binder, validate_ticket, Ticket};

#[cfg(test)]
mod tests;
