//! The public ledger: an append-only bulletin board holding published
//! `(timestamp, ciphertext, authentication tag)` entries.
//!
//! Ordering comes from a monotone sequence number; wall-clock seconds ride
//! along as advisory metadata. Publishing is idempotent per payload (the
//! three servers all publish the same session result and deduplicate to one
//! entry), and the persistence file is strictly grow-only JSON lines, one
//! entry per line with a content hash for corruption detection.

mod service;
mod store;

pub use service::{LedgerClient, LedgerServer};
pub use store::{Failpoint, LedgerEntry, LedgerStore};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("corrupt ledger file at line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("http error: {0}")]
    Http(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LedgerError>;
