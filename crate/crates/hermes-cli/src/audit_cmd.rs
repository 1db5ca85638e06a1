//! Dispute resolution: reconstruct one session's booking from at least two
//! servers' audit records and verify the owner signature.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use hermes_core::field::FieldParams;
use hermes_core::protocol::{audit_reconstruct, AuditRecord, SignatureMode, VerifyingKey};

#[derive(Args)]
pub struct AuditArgs {
    /// Audit record files (JSON) from two or three distinct servers.
    #[arg(long, value_delimiter = ',', required = true)]
    pub records: Vec<PathBuf>,
    /// Owner verifying key, hex (512-bit signature mode). When given, the
    /// reconstructed signature is checked against it.
    #[arg(long)]
    pub owner_pub: Option<String>,
    /// Expected session id (hex); refused if the records disagree.
    #[arg(long)]
    pub session: Option<String>,
}

pub fn run(args: AuditArgs) -> Result<i32> {
    let mut records = Vec::new();
    for path in &args.records {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        records.push(AuditRecord::from_json(&text).map_err(|e| anyhow::anyhow!("{e}"))?);
    }
    if let Some(expect) = &args.session {
        for r in &records {
            anyhow::ensure!(
                &r.session_id == expect,
                "record {} belongs to session {}",
                r.party,
                r.session_id
            );
        }
    }
    let field = FieldParams::production();
    let m = audit_reconstruct(&field, &records).map_err(|e| anyhow::anyhow!("{e}"))?;
    println!("session:      {}", records[0].session_id);
    println!("booking id:   {}", m.bd.booking_id);
    println!("vehicle id:   {}", m.bd.vehicle_id);
    println!("location:     {}", m.bd.location);
    println!("window:       [{}, {})", m.bd.cd_start, m.bd.cd_end);
    println!("flags:        {:#010x}", m.bd.cd_flags);
    println!("rights mask:  {:#04x}", m.bd.access_rights);
    println!("cert digest:  {}", hex::encode(m.bd.cert_hash));

    match &args.owner_pub {
        Some(hex_key) => {
            let bytes = hex::decode(hex_key).context("owner key must be hex")?;
            let key = VerifyingKey::from_bytes(SignatureMode::Compact512, &bytes)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            if m.verify(&key) {
                println!("signature:    VALID under the provided owner key");
                Ok(0)
            } else {
                println!("signature:    INVALID under the provided owner key");
                Ok(3)
            }
        }
        None => {
            println!("signature:    {} bytes (no owner key provided)", m.sigma.len());
            Ok(0)
        }
    }
}
