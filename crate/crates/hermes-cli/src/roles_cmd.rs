//! File-based role runners for distributed operation. Each role keeps a
//! deterministic seed file in the workspace directory and re-derives its
//! key material per invocation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use hermes_core::field::FieldParams;
use hermes_core::protocol::{
    present_token, register_vehicle, retrieve_entry, AccessRequest, AtWire, Backend,
    BookingDetails, Consumer, Owner, SignatureMode, Vehicle, VehicleRecord, VmDatabase,
};
use hermes_ledger::LedgerClient;
use hermes_server::client as server_client;

use crate::dealer::seed_from_hex;

#[derive(Args)]
pub struct VmInitArgs {
    /// Output JSON database of vehicles and their long-term keys.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "owner-1")]
    pub owner: String,
    #[arg(long, default_value_t = 4)]
    pub vehicles: u32,
    #[arg(long, default_value = "01")]
    pub seed: String,
}

pub fn run_vm_init(args: VmInitArgs) -> Result<i32> {
    let mut rng = ChaCha12Rng::from_seed(seed_from_hex(&args.seed)?);
    let mut db = VmDatabase::default();
    for i in 0..args.vehicles {
        let mut key = [0u8; 16];
        rng.fill_bytes(&mut key);
        db.rows.push(VehicleRecord {
            owner_id: args.owner.clone(),
            vehicle_id: 0x0100_0000 + i,
            key,
        });
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&db)?)?;
    println!("wrote {} with {} vehicles for {}", args.out.display(), args.vehicles, args.owner);
    Ok(0)
}

fn load_vm(path: &Path) -> Result<VmDatabase> {
    serde_json::from_str(&std::fs::read_to_string(path)?).context("bad vm database")
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SeedState {
    name: String,
    seed: String,
}

fn write_state<T: serde::Serialize>(dir: &Path, file: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(file), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_state<T: serde::de::DeserializeOwned>(dir: &Path, file: &str) -> Result<T> {
    let path = dir.join(file);
    serde_json::from_str(&std::fs::read_to_string(&path).with_context(|| {
        format!("{} missing; run the corresponding init step first", path.display())
    })?)
    .context("corrupt state file")
}

fn rebuild_owner(dir: &Path) -> Result<Owner> {
    let st: SeedState = read_state(dir, "owner.json")?;
    let mut rng = ChaCha12Rng::from_seed(seed_from_hex(&st.seed)?);
    Ok(Owner::new(&st.name, SignatureMode::Compact512, &FieldParams::production(), &mut rng))
}

fn rebuild_consumer(dir: &Path) -> Result<Consumer> {
    let st: SeedState = read_state(dir, "consumer.json")?;
    let mut rng = ChaCha12Rng::from_seed(seed_from_hex(&st.seed)?);
    Ok(Consumer::new(&st.name, &FieldParams::production(), &mut rng))
}

// ---------------------------------------------------------------------------
// Owner
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct OwnerArgs {
    #[command(subcommand)]
    cmd: OwnerCmd,
}

#[derive(Subcommand)]
enum OwnerCmd {
    /// Create the owner's key material in the workspace.
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "owner-1")]
        id: String,
        #[arg(long, default_value = "0a")]
        seed: String,
    },
    /// Share the manufacturer rows for this owner to the three servers.
    Register {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        vm: PathBuf,
        #[arg(long, value_delimiter = ',')]
        servers: Vec<String>,
        #[arg(long, default_value = "0b")]
        seed: String,
    },
    /// Agree on booking details (step B) and store them.
    Book {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        vehicle_id: u32,
        #[arg(long)]
        booking_id: u32,
        #[arg(long)]
        start: u32,
        #[arg(long)]
        end: u32,
        #[arg(long, default_value_t = 7)]
        rights: u8,
        #[arg(long, default_value_t = 0)]
        location: u64,
    },
    /// Sign and share the booking, then request token generation (step 1).
    Request {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "mimc")]
        backend: String,
        #[arg(long, value_delimiter = ',')]
        servers: Vec<String>,
        #[arg(long, default_value = "0c")]
        seed: String,
    },
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SessionState {
    session_id: String,
    booking_id: u32,
    ts: u64,
    backend: String,
}

pub fn run_owner(args: OwnerArgs) -> Result<i32> {
    match args.cmd {
        OwnerCmd::Init { dir, id, seed } => {
            write_state(&dir, "owner.json", &SeedState { name: id.clone(), seed })?;
            let owner = rebuild_owner(&dir)?;
            println!(
                "owner {} ready; verifying key {}",
                id,
                hex::encode(owner.verifying.to_bytes())
            );
            Ok(0)
        }
        OwnerCmd::Register { dir, vm, servers, seed } => {
            let owner = rebuild_owner(&dir)?;
            let db = load_vm(&vm)?;
            let mut rng = ChaCha12Rng::from_seed(seed_from_hex(&seed)?);
            let field = FieldParams::production();
            let mut per_server: [Vec<_>; 3] = Default::default();
            let mut count = 0;
            for (idx, rec) in db.rows.iter().filter(|r| r.owner_id == owner.id).enumerate() {
                let rows = register_vehicle(&field, rec, idx as u32, &mut rng);
                for (i, r) in rows.into_iter().enumerate() {
                    per_server[i].push(r);
                }
                count += 1;
            }
            if count == 0 {
                bail!("no vehicles for owner {} in {}", owner.id, vm.display());
            }
            let servers: [String; 3] = servers
                .try_into()
                .map_err(|_| anyhow::anyhow!("exactly three server urls required"))?;
            for (i, url) in servers.iter().enumerate() {
                server_client::register(url, &per_server[i])?;
            }
            println!("registered {count} vehicles for {}", owner.id);
            Ok(0)
        }
        OwnerCmd::Book { dir, vehicle_id, booking_id, start, end, rights, location } => {
            let consumer = rebuild_consumer(&dir)?;
            let bd = BookingDetails {
                cert_hash: consumer.cert.digest(),
                vehicle_id,
                location,
                cd_start: start,
                cd_end: end,
                cd_flags: 0,
                access_rights: rights,
                booking_id,
            };
            bd.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
            write_state(&dir, "bd.json", &bd)?;
            println!("booking {booking_id} agreed for vehicle {vehicle_id}");
            Ok(0)
        }
        OwnerCmd::Request { dir, backend, servers, seed } => {
            let backend = Backend::parse(&backend).map_err(|e| anyhow::anyhow!("{e}"))?;
            let owner = rebuild_owner(&dir)?;
            let bd: BookingDetails = read_state(&dir, "bd.json")?;
            let mut rng = ChaCha12Rng::from_seed(seed_from_hex(&seed)?);
            let field = FieldParams::production();
            let m = hermes_core::protocol::SignedBooking::sign(bd.clone(), &owner.signing)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let sealed: [Vec<u8>; 3] = std::array::from_fn(|i| {
                std::fs::read(dir.join(format!("bundle-{i}.bin"))).unwrap_or_default()
            });
            if sealed.iter().any(|b| b.is_empty()) {
                bail!("sealed bundles missing; run `consumer session-keys` first");
            }
            let (m_shares, target_shares) =
                owner.share_signed_booking(backend, &field, &m, &mut rng);
            let session_id = owner.new_session_id(&mut rng);
            let msgs = owner.at_gen_messages(
                backend,
                session_id,
                bd.booking_id,
                &sealed,
                &m_shares,
                &target_shares,
            );
            let servers: [String; 3] = servers
                .try_into()
                .map_err(|_| anyhow::anyhow!("exactly three server urls required"))?;
            let mut threads = Vec::new();
            for (url, msg) in servers.into_iter().zip(msgs) {
                threads.push(std::thread::spawn(move || {
                    server_client::at_gen_request(&url, &msg)
                }));
            }
            let mut ts = None;
            for t in threads {
                let got = t.join().unwrap()?;
                if let Some(prev) = ts {
                    if prev != got {
                        bail!("servers acknowledged different timestamps");
                    }
                }
                ts = Some(got);
            }
            let ts = ts.unwrap();
            write_state(
                &dir,
                "session.json",
                &SessionState {
                    session_id: hex::encode(session_id),
                    booking_id: bd.booking_id,
                    ts,
                    backend: backend.as_str().into(),
                },
            )?;
            println!("token published at ledger ts {ts}");
            Ok(0)
        }
    }
}

// ---------------------------------------------------------------------------
// Consumer
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ConsumerArgs {
    #[command(subcommand)]
    cmd: ConsumerCmd,
}

#[derive(Subcommand)]
enum ConsumerCmd {
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "consumer-1")]
        subject: String,
        #[arg(long, default_value = "0d")]
        seed: String,
    },
    /// Derive session keys and seal the per-server bundles (step 1).
    SessionKeys {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "mimc")]
        backend: String,
        /// Comma-separated hex public keys of servers 0,1,2.
        #[arg(long, value_delimiter = ',')]
        server_pubs: Vec<String>,
        #[arg(long, default_value_t = 1)]
        counter: u64,
    },
    /// Locate, verify and decrypt the published token (step 3).
    Retrieve {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        ledger: String,
    },
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ConsumerSession {
    counter: u64,
    backend: String,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RetrievalState {
    vehicle_id: u32,
    ledger_ts: u64,
}

pub fn run_consumer(args: ConsumerArgs) -> Result<i32> {
    match args.cmd {
        ConsumerCmd::Init { dir, subject, seed } => {
            write_state(&dir, "consumer.json", &SeedState { name: subject.clone(), seed })?;
            let consumer = rebuild_consumer(&dir)?;
            println!("consumer {subject} ready; cert digest {}", hex::encode(&consumer.cert.digest()[..8]));
            Ok(0)
        }
        ConsumerCmd::SessionKeys { dir, backend, server_pubs, counter } => {
            let backend = Backend::parse(&backend).map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut consumer = rebuild_consumer(&dir)?;
            let pubs: Vec<[u8; 32]> = server_pubs
                .iter()
                .map(|h| {
                    hex::decode(h)
                        .ok()
                        .and_then(|v| v.try_into().ok())
                        .ok_or_else(|| anyhow::anyhow!("bad server public key"))
                })
                .collect::<Result<_>>()?;
            let pubs: [[u8; 32]; 3] = pubs
                .try_into()
                .map_err(|_| anyhow::anyhow!("exactly three server keys required"))?;
            let mut rng = rand::rngs::OsRng;
            let (_, sealed) = consumer
                .session_key_gen(backend, counter, &pubs, &mut rng)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            for (i, b) in sealed.iter().enumerate() {
                std::fs::write(dir.join(format!("bundle-{i}.bin")), b)?;
            }
            write_state(
                &dir,
                "consumer-session.json",
                &ConsumerSession { counter, backend: backend.as_str().into() },
            )?;
            println!("session keys derived at counter {counter}; bundles sealed");
            Ok(0)
        }
        ConsumerCmd::Retrieve { dir, ledger } => {
            let mut consumer = rebuild_consumer(&dir)?;
            let session: ConsumerSession = read_state(&dir, "consumer-session.json")?;
            let backend =
                Backend::parse(&session.backend).map_err(|e| anyhow::anyhow!("{e}"))?;
            let bd: BookingDetails = read_state(&dir, "bd.json")?;
            // Re-derive the same session keys; the rebuilt key station is
            // fresh so the recorded counter is claimable again.
            let keys = consumer
                .keys
                .derive(session.counter)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let tag = consumer.expected_tag(backend, &keys, &bd);
            let client = LedgerClient::new(&ledger);
            let entry = client
                .query_by_tag(&tag)?
                .ok_or_else(|| anyhow::anyhow!("no ledger entry matches the expected tag"))?;
            let retrieval = retrieve_entry(
                backend,
                &FieldParams::production(),
                &keys,
                &bd,
                &entry.c,
                &entry.tag,
            )
            .map_err(|e| anyhow::anyhow!("verification failed: {e}"))?;
            std::fs::write(dir.join("at.bin"), retrieval.at.encode())?;
            write_state(
                &dir,
                "retrieval.json",
                &RetrievalState { vehicle_id: retrieval.vehicle_id, ledger_ts: entry.ts },
            )?;
            println!(
                "token retrieved for vehicle {} at ts {}",
                retrieval.vehicle_id, entry.ts
            );
            Ok(0)
        }
    }
}

// ---------------------------------------------------------------------------
// Vehicle
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct VehicleArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub vm: PathBuf,
    /// Injected on-board clock, epoch seconds.
    #[arg(long)]
    pub clock: u32,
    #[arg(long, default_value_t = 1)]
    pub action: u8,
    #[arg(long, default_value = "0e")]
    pub seed: String,
}

pub fn run_vehicle(args: VehicleArgs) -> Result<i32> {
    let owner = rebuild_owner(&args.dir)?;
    let consumer = rebuild_consumer(&args.dir)?;
    let retrieval: RetrievalState = read_state(&args.dir, "retrieval.json")?;
    let at_bytes = std::fs::read(args.dir.join("at.bin")).context("at.bin missing")?;
    let at = AtWire::decode(&FieldParams::production(), &at_bytes)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let vm = load_vm(&args.vm)?;
    let rec = vm
        .lookup(&owner.id, retrieval.vehicle_id)
        .ok_or_else(|| anyhow::anyhow!("vehicle {} not in manufacturer db", retrieval.vehicle_id))?;
    let mut rng = ChaCha12Rng::from_seed(seed_from_hex(&args.seed)?);
    let mut vehicle = Vehicle::new(
        rec.vehicle_id,
        rec.key,
        owner.verifying.clone(),
        &FieldParams::production(),
        &mut rng,
    );
    vehicle.clock = args.clock;
    let req = AccessRequest {
        at,
        vehicle_id: retrieval.vehicle_id,
        cert: consumer.cert.clone(),
        ledger_ts: retrieval.ledger_ts,
        action: args.action,
    };
    match present_token(&mut vehicle, &consumer, &req, &mut rng) {
        hermes_core::protocol::AccessDecision::Granted(conf) => {
            let bd: BookingDetails = read_state(&args.dir, "bd.json")?;
            anyhow::ensure!(
                conf.verify(&vehicle.verifying, &bd),
                "confirmation failed to verify"
            );
            write_state(&args.dir, "confirmation.json", &conf)?;
            println!("access granted at {}", conf.ts_access);
            Ok(0)
        }
        hermes_core::protocol::AccessDecision::Rejected(reason) => {
            println!("access rejected: {reason:?}");
            Ok(2)
        }
    }
}
