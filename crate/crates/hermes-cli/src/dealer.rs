//! Preprocessing-tape generation.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use hermes_core::field::FieldParams;
use hermes_core::tape::{dealer_generate, TapeCounts};

#[derive(Args)]
pub struct DealerArgs {
    /// Output directory for tape-0.bin, tape-1.bin, tape-2.bin.
    #[arg(long)]
    pub out: PathBuf,
    /// Hex seed (32 bytes); tapes are deterministic in it.
    #[arg(long, default_value = "00")]
    pub seed: String,
    #[arg(long, default_value_t = 4096)]
    pub zero_shares: u64,
    #[arg(long, default_value_t = 200_000)]
    pub and_zero_shares: u64,
    #[arg(long, default_value_t = 4096)]
    pub random_bits: u64,
    #[arg(long, default_value_t = 4096)]
    pub cube_tuples: u64,
}

pub fn seed_from_hex(hex_seed: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(hex_seed).context("seed must be hex")?;
    let mut seed = [0u8; 32];
    let n = bytes.len().min(32);
    seed[..n].copy_from_slice(&bytes[..n]);
    Ok(seed)
}

pub fn run(args: DealerArgs) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    let counts = TapeCounts {
        zero_shares: args.zero_shares,
        and_zero_shares: args.and_zero_shares,
        random_bits: args.random_bits,
        cube_tuples: args.cube_tuples,
    };
    let field = FieldParams::production();
    let tapes = dealer_generate(&field, counts, seed_from_hex(&args.seed)?);
    for (i, tape) in tapes.iter().enumerate() {
        let path = args.out.join(format!("tape-{i}.bin"));
        std::fs::write(&path, tape.encode())?;
        println!(
            "wrote {} (zero={}, and={}, bits={}, cubes={})",
            path.display(),
            counts.zero_shares,
            counts.and_zero_shares,
            counts.random_bits,
            counts.cube_tuples
        );
    }
    Ok(0)
}
