//! One of the three mutually distrusting servers.
//!
//! The daemon hosts the share database loaded at registration time, accepts
//! token-generation requests over a JSON control plane, runs the
//! three-party session with its peers over the TCP data plane, publishes
//! the result to the ledger and persists its audit record. Everything it
//! stores or logs is shares and metadata; no cleartext booking material,
//! session keys or vehicle keys ever exist in this crate.

mod db;
mod daemon;

pub use daemon::{client, VsspServer, VsspServerHandle};
pub use db::ServerDb;

use std::path::PathBuf;

use hermes_core::protocol::{Backend, KemKeyPair};
use hermes_core::share::PartyId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("core error: {0}")]
    Core(#[from] hermes_core::Error),
    #[error("ledger error: {0}")]
    Ledger(#[from] hermes_ledger::LedgerError),
    #[error("db error: {0}")]
    Db(String),
    #[error("unknown owner {0}")]
    UnknownOwner(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("http error: {0}")]
    Http(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ServerError>;

/// Static configuration of one server process.
pub struct ServerConfig {
    pub party: PartyId,
    /// Control-plane HTTP listen address.
    pub listen: String,
    /// Data-plane TCP listen address (this party's entry in `peers`).
    pub data_listen: String,
    /// All three parties' data-plane addresses, by party id.
    pub peers: [String; 3],
    pub ledger_url: String,
    pub db_path: PathBuf,
    pub tape_path: PathBuf,
    pub backend: Backend,
    pub kem: KemKeyPair,
    /// Fault injection for recovery tests: refuse to join any session.
    pub fail_sessions: bool,
}
