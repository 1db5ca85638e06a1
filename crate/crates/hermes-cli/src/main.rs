//! `hermes` — operator command line for the vehicle sharing-access system.

mod audit_cmd;
mod bench;
mod cluster;
mod dealer;
mod e2e;
mod roles_cmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hermes", version, about = "Three-server MPC vehicle sharing-access system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the three preprocessing tapes from one seed.
    Dealer(dealer::DealerArgs),
    /// Create a manufacturer key database with random vehicle keys.
    VmInit(roles_cmd::VmInitArgs),
    /// Run the public-ledger daemon.
    Ledger(cluster::LedgerArgs),
    /// Run one server daemon.
    Server(cluster::ServerArgs),
    /// Generate a server key pair for encrypted key bundles.
    KemKeygen(cluster::KemKeygenArgs),
    /// Owner-side steps: booking agreement and token-generation requests.
    Owner(roles_cmd::OwnerArgs),
    /// Consumer-side steps: session keys and token retrieval.
    Consumer(roles_cmd::ConsumerArgs),
    /// Vehicle-side verification of a retrieved token.
    Vehicle(roles_cmd::VehicleArgs),
    /// Full in-process run of steps A, B, 1-4.
    RunE2e(e2e::E2eArgs),
    /// Benchmark sweep over vehicle counts and backends.
    Bench(bench::BenchArgs),
    /// Reconstruct a booking from two or three server audit records.
    Audit(audit_cmd::AuditArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dealer(args) => dealer::run(args),
        Command::VmInit(args) => roles_cmd::run_vm_init(args),
        Command::Ledger(args) => cluster::run_ledger(args),
        Command::Server(args) => cluster::run_server(args),
        Command::KemKeygen(args) => cluster::run_kem_keygen(args),
        Command::Owner(args) => roles_cmd::run_owner(args),
        Command::Consumer(args) => roles_cmd::run_consumer(args),
        Command::Vehicle(args) => roles_cmd::run_vehicle(args),
        Command::RunE2e(args) => e2e::run(args),
        Command::Bench(args) => bench::run(args),
        Command::Audit(args) => audit_cmd::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
