//! Daemon runners: ledger service, server daemon, key generation.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use hermes_core::protocol::{Backend, KemKeyPair};
use hermes_core::share::PartyId;
use hermes_ledger::{LedgerServer, LedgerStore};
use hermes_server::{ServerConfig, VsspServer};

#[derive(Args)]
pub struct LedgerArgs {
    #[arg(long, default_value = "127.0.0.1:7600")]
    pub listen: String,
    /// Persistence file (JSON lines); omit for in-memory.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

pub fn run_ledger(args: LedgerArgs) -> Result<i32> {
    let store = Arc::new(match &args.file {
        Some(path) => LedgerStore::open(path)?,
        None => LedgerStore::in_memory(),
    });
    let server = LedgerServer::start(store, args.listen.as_str())?;
    println!("ledger listening on http://{}", server.addr);
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

#[derive(Args)]
pub struct KemKeygenArgs {
    /// Output JSON file holding the secret; the public key is printed.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct KemKeyFile {
    pub secret: String,
    pub public: String,
}

pub fn run_kem_keygen(args: KemKeygenArgs) -> Result<i32> {
    let pair = KemKeyPair::generate(&mut rand::rngs::OsRng);
    let file = KemKeyFile {
        secret: hex::encode(pair.secret_bytes()),
        public: hex::encode(pair.public),
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&file)?)?;
    println!("public: {}", file.public);
    Ok(0)
}

pub fn load_kem_key(path: &std::path::Path) -> Result<KemKeyPair> {
    let file: KemKeyFile = serde_json::from_str(&std::fs::read_to_string(path)?)
        .context("bad kem key file")?;
    let secret: [u8; 32] = hex::decode(&file.secret)?
        .try_into()
        .map_err(|_| anyhow::anyhow!("kem secret must be 32 bytes"))?;
    Ok(KemKeyPair::from_secret_bytes(secret))
}

#[derive(Args)]
pub struct ServerArgs {
    /// Party index, 0..2.
    #[arg(long)]
    pub party: u8,
    /// Control-plane HTTP listen address.
    #[arg(long, default_value = "127.0.0.1:0")]
    pub listen: String,
    /// Data-plane TCP listen address; must equal this party's peers entry.
    #[arg(long)]
    pub data_listen: String,
    /// Comma-separated data-plane addresses for parties 0,1,2.
    #[arg(long, value_delimiter = ',')]
    pub peers: Vec<String>,
    #[arg(long)]
    pub ledger: String,
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub tape: PathBuf,
    #[arg(long, default_value = "mimc")]
    pub backend: String,
    /// JSON key file from `kem-keygen`.
    #[arg(long)]
    pub kem_key: PathBuf,
}

pub fn run_server(args: ServerArgs) -> Result<i32> {
    if args.party > 2 {
        anyhow::bail!("party must be 0, 1 or 2");
    }
    let peers: [String; 3] = args
        .peers
        .clone()
        .try_into()
        .map_err(|_| anyhow::anyhow!("exactly three peer addresses required"))?;
    let config = ServerConfig {
        party: PartyId(args.party),
        listen: args.listen.clone(),
        data_listen: args.data_listen.clone(),
        peers,
        ledger_url: args.ledger.clone(),
        db_path: args.db.clone(),
        tape_path: args.tape.clone(),
        backend: Backend::parse(&args.backend)?,
        kem: load_kem_key(&args.kem_key)?,
        fail_sessions: false,
    };
    let handle = VsspServer::start(config)?;
    println!(
        "server {} control http://{} data {}",
        args.party, handle.addr, handle.data_addr
    );
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
