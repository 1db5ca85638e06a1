//! Core engine for the Hermes vehicle sharing-access protocol: prime-field
//! and GF(2) arithmetic, 2-out-of-3 replicated secret sharing, instrumented
//! party-to-party transport, the MiMC cipher suite (CTR mode, HtMAC, KDF),
//! a Bristol-fashion Boolean circuit backend, and the protocol role logic
//! for owners, consumers, vehicles and the three servers.

pub mod bits;
pub mod boolcirc;
pub mod engine;
pub mod eqz;
pub mod field;
pub mod mimc;
pub mod protocol;
pub mod share;
pub mod tape;
pub mod transport;

use thiserror::Error;

/// Errors surfaced by the MPC engine and protocol layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field parameter mismatch: {0}")]
    FieldMismatch(String),
    #[error("division by zero in field inversion")]
    DivisionByZero,
    #[error("unsupported field modulus: {0}")]
    BadFieldParams(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("preprocessing exhausted: {0}")]
    PreprocessingExhausted(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("share integrity error: {0}")]
    ShareIntegrity(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol desync: {0}")]
    Desync(String),
    #[error("session aborted: {0}")]
    SessionAbort(String),
    #[error("circuit parse error at line {line}: {msg}")]
    CircuitParse { line: usize, msg: String },
    #[error("circuit evaluation error: {0}")]
    CircuitEval(String),
    #[error("counter reuse refused: counter {0} already used")]
    CounterReuse(u64),
    #[error("tag verification failed")]
    TagInvalid,
    #[error("signature error: {0}")]
    Signature(String),
    #[error("public-key decryption failed: {0}")]
    KemDecrypt(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("audit error: {0}")]
    Audit(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
