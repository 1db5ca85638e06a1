//! Full in-process run of steps A, B, 1, 2, 3 and 4: a ledger daemon,
//! three server daemons, and the three user roles, with optional fault
//! injection and the owner-forced revocation path.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use hermes_core::field::FieldParams;
use hermes_core::protocol::harness::required_tape_counts;
use hermes_core::protocol::{
    present_token, retrieve_entry, AccessDecision, AccessRequest, Backend, BookingDetails,
    Consumer, RejectionReason, SignedBooking, REVOKED_FLAG,
};
use hermes_core::share::PartyId;
use hermes_core::tape::dealer_generate;
use hermes_ledger::{LedgerClient, LedgerServer, LedgerStore};
use hermes_server::{client as server_client, ServerConfig, VsspServer, VsspServerHandle};

use crate::dealer::seed_from_hex;

#[derive(Args)]
pub struct E2eArgs {
    #[arg(long, default_value_t = 2)]
    pub n_vehicles: usize,
    #[arg(long, default_value = "mimc")]
    pub backend: String,
    /// Artifacts directory (defaults to a temp dir that is kept).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Corrupt one public artifact and expect the protocol to refuse:
    /// `ledger-c`, `ledger-tag`, `at`, or `cert`.
    #[arg(long)]
    pub tamper: Option<String>,
    /// After publication, run an owner-forced revocation and expect the
    /// original token to be rejected as superseded.
    #[arg(long, default_value_t = false)]
    pub revoke_after_publish: bool,
    #[arg(long, default_value = "11")]
    pub seed: String,
}

struct Cluster {
    ledger_url: String,
    _ledger: LedgerServer,
    urls: [String; 3],
    _handles: Vec<VsspServerHandle>,
}

fn free_addrs(n: usize) -> Vec<String> {
    let listeners: Vec<std::net::TcpListener> = (0..n)
        .map(|_| std::net::TcpListener::bind("127.0.0.1:0").unwrap())
        .collect();
    listeners
        .iter()
        .map(|l| format!("127.0.0.1:{}", l.local_addr().unwrap().port()))
        .collect()
}

fn start_cluster(
    dir: &std::path::Path,
    backend: Backend,
    n_vehicles: usize,
    kems: &[hermes_core::protocol::KemKeyPair; 3],
    tape_seed: [u8; 32],
) -> Result<Cluster> {
    let store = Arc::new(LedgerStore::open(&dir.join("ledger.jsonl"))?);
    let ledger = LedgerServer::start(store, "127.0.0.1:0")?;
    let ledger_url = ledger.url();

    let mut counts = required_tape_counts(backend, n_vehicles);
    // Room for a follow-up revocation session.
    counts.zero_shares *= 3;
    counts.and_zero_shares *= 3;
    counts.random_bits *= 3;
    counts.cube_tuples *= 3;
    let tapes = dealer_generate(&FieldParams::production(), counts, tape_seed);
    let data_addrs: [String; 3] = free_addrs(3).try_into().unwrap();
    let mut handles = Vec::new();
    let mut urls = Vec::new();
    for (i, tape) in tapes.into_iter().enumerate() {
        let tape_path = dir.join(format!("tape-{i}.bin"));
        std::fs::write(&tape_path, tape.encode())?;
        let handle = VsspServer::start(ServerConfig {
            party: PartyId(i as u8),
            listen: "127.0.0.1:0".into(),
            data_listen: data_addrs[i].clone(),
            peers: data_addrs.clone(),
            ledger_url: ledger_url.clone(),
            db_path: dir.join(format!("db-{i}")),
            tape_path,
            backend,
            kem: kems[i].clone(),
            fail_sessions: false,
        })?;
        urls.push(format!("http://{}", handle.addr));
        handles.push(handle);
    }
    Ok(Cluster {
        ledger_url,
        _ledger: ledger,
        urls: urls.try_into().unwrap(),
        _handles: handles,
    })
}

fn request_generation(
    cluster: &Cluster,
    owner: &hermes_core::protocol::Owner,
    backend: Backend,
    booking_id: u32,
    sealed: &[Vec<u8>; 3],
    m_shares: &[hermes_core::protocol::MShares; 3],
    targets: &[Option<hermes_core::share::RepShare>; 3],
    rng: &mut impl RngCore,
) -> Result<u64> {
    let session_id = owner.new_session_id(rng);
    let msgs = owner.at_gen_messages(backend, session_id, booking_id, sealed, m_shares, targets);
    let mut threads = Vec::new();
    for (url, msg) in cluster.urls.iter().cloned().zip(msgs) {
        threads.push(std::thread::spawn(move || server_client::at_gen_request(&url, &msg)));
    }
    let mut ts = None;
    for t in threads {
        let got = t.join().unwrap().context("token generation failed")?;
        ts = Some(got);
    }
    Ok(ts.unwrap())
}

pub fn run(args: E2eArgs) -> Result<i32> {
    let backend = Backend::parse(&args.backend).map_err(|e| anyhow::anyhow!("{e}"))?;
    let dir = match &args.out {
        Some(p) => {
            std::fs::create_dir_all(p)?;
            p.clone()
        }
        None => {
            let p = std::env::temp_dir().join(format!("hermes-e2e-{}", std::process::id()));
            std::fs::create_dir_all(&p)?;
            p
        }
    };
    let field = FieldParams::production();
    let mut rng = ChaCha12Rng::from_seed(seed_from_hex(&args.seed)?);

    // Roles and vehicles.
    let owner = hermes_core::protocol::Owner::new(
        "owner-1",
        hermes_core::protocol::SignatureMode::Compact512,
        &field,
        &mut rng,
    );
    let mut consumer = Consumer::new("consumer-1", &field, &mut rng);
    let mut vehicles = Vec::new();
    for i in 0..args.n_vehicles {
        let mut key = [0u8; 16];
        rng.fill_bytes(&mut key);
        vehicles.push(hermes_core::protocol::VehicleRecord {
            owner_id: owner.id.clone(),
            vehicle_id: 0x0200_0000 + i as u32,
            key,
        });
    }
    let target = (rng.next_u32() as usize) % args.n_vehicles;
    let kems: [hermes_core::protocol::KemKeyPair; 3] =
        std::array::from_fn(|_| hermes_core::protocol::KemKeyPair::generate(&mut rng));

    let cluster = start_cluster(&dir, backend, args.n_vehicles, &kems, {
        let mut s = [0u8; 32];
        rng.fill_bytes(&mut s);
        s
    })?;

    // Step A: register shares with all servers.
    let mut per_server: [Vec<_>; 3] = Default::default();
    for (idx, rec) in vehicles.iter().enumerate() {
        let rows = hermes_core::protocol::register_vehicle(&field, rec, idx as u32, &mut rng);
        for (i, r) in rows.into_iter().enumerate() {
            per_server[i].push(r);
        }
    }
    for (i, url) in cluster.urls.iter().enumerate() {
        server_client::register(url, &per_server[i])?;
    }
    println!("step A: {} vehicles registered", args.n_vehicles);

    // Step B: booking agreement.
    let booking_id = 0x0077_0000 | (rng.next_u32() & 0xFFFF);
    let bd = BookingDetails {
        cert_hash: consumer.cert.digest(),
        vehicle_id: vehicles[target].vehicle_id,
        location: 48_8566_2_3522,
        cd_start: 1_700_000_000,
        cd_end: 1_700_086_400,
        cd_flags: 0,
        access_rights: 0b111,
        booking_id,
    };
    std::fs::write(dir.join("bd.json"), serde_json::to_string_pretty(&bd)?)?;
    println!("step B: booking {booking_id} agreed");

    // Step 1: session keys and signed booking shares.
    let pubs: [[u8; 32]; 3] = std::array::from_fn(|i| kems[i].public);
    let (keys, sealed) = consumer
        .session_key_gen(backend, 1, &pubs, &mut rng)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let m = SignedBooking::sign(bd.clone(), &owner.signing).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (m_shares, targets) = owner.share_signed_booking(backend, &field, &m, &mut rng);
    println!("step 1: session keys sealed, booking signed and shared");

    // Step 2: the servers generate and publish.
    let ts = request_generation(
        &cluster, &owner, backend, booking_id, &sealed, &m_shares, &targets, &mut rng,
    )?;
    println!("step 2: token generated and published at ts {ts}");

    // Step 3: anonymous retrieval and verification.
    let ledger = LedgerClient::new(&cluster.ledger_url);
    let expected_tag = consumer.expected_tag(backend, &keys, &bd);
    let mut entry = ledger
        .query_by_tag(&expected_tag)?
        .context("published entry not found by tag")?;

    match args.tamper.as_deref() {
        Some("ledger-tag") => {
            entry.tag[0] ^= 1;
            match retrieve_entry(backend, &field, &keys, &bd, &entry.c, &entry.tag) {
                Err(_) => {
                    println!("step 3: tampered tag rejected by consumer");
                    return Ok(0);
                }
                Ok(_) => bail!("tampered tag was accepted"),
            }
        }
        Some("ledger-c") => {
            // Tag still matches, decryption yields a garbled token; the
            // vehicle must refuse it downstream.
            let byte = 20 + (rng.next_u32() as usize) % (entry.c.len() - 20);
            entry.c[byte] ^= 0x10;
        }
        _ => {}
    }

    let retrieval = match retrieve_entry(backend, &field, &keys, &bd, &entry.c, &entry.tag) {
        Ok(r) => r,
        Err(e) => {
            if args.tamper.is_some() {
                println!("step 3: tampered entry rejected ({e})");
                return Ok(0);
            }
            bail!("step 3 failed: {e}");
        }
    };
    std::fs::write(dir.join("at.bin"), retrieval.at.encode())?;
    println!("step 3: token retrieved for vehicle {}", retrieval.vehicle_id);

    // Step 4: on-board verification.
    let rec = &vehicles[target];
    let mut vehicle = hermes_core::protocol::Vehicle::new(
        rec.vehicle_id,
        rec.key,
        owner.verifying.clone(),
        &field,
        &mut rng,
    );
    vehicle.clock = bd.cd_start + 3600;

    let mut at = retrieval.at.clone();
    let mut cert = consumer.cert.clone();
    match args.tamper.as_deref() {
        Some("at") => {
            let mut bytes = at.encode();
            let i = 5 + (rng.next_u32() as usize) % (bytes.len() - 5);
            bytes[i] ^= 0x40;
            at = hermes_core::protocol::AtWire::decode(&field, &bytes)
                .unwrap_or_else(|_| retrieval.at.clone());
        }
        Some("cert") => {
            cert.subject = "someone-else".into();
        }
        Some("ledger-c") | Some("ledger-tag") | None => {}
        Some(other) => bail!("unknown tamper mode {other}"),
    }

    let req = AccessRequest {
        at,
        vehicle_id: retrieval.vehicle_id,
        cert,
        ledger_ts: entry.ts,
        action: 0b001,
    };
    let decision = present_token(&mut vehicle, &consumer, &req, &mut rng);
    match (&decision, args.tamper.as_deref()) {
        (AccessDecision::Granted(conf), None) => {
            anyhow::ensure!(conf.verify(&vehicle.verifying, &bd), "confirmation invalid");
            std::fs::write(dir.join("confirmation.json"), serde_json::to_string_pretty(conf)?)?;
            println!("step 4: access granted and confirmation verified");
        }
        (AccessDecision::Rejected(reason), Some(mode)) => {
            println!("step 4: tampered artifact rejected ({mode}: {reason:?})");
            return Ok(0);
        }
        (AccessDecision::Granted(_), Some(mode)) => {
            bail!("tampered artifact ({mode}) was granted access");
        }
        (AccessDecision::Rejected(reason), None) => {
            bail!("honest run rejected at step 4: {reason:?}");
        }
    }

    if args.revoke_after_publish {
        return run_revocation(
            &cluster, &dir, backend, &field, &owner, &bd, &mut vehicle, &consumer, retrieval,
            entry.ts, &kems, &mut rng,
        );
    }

    println!("e2e complete; artifacts in {}", dir.display());
    Ok(0)
}

/// Owner-forced revocation: the owner generates its own session keys, runs
/// steps 1-3 alone, forwards the revocation token to the vehicle, and the
/// original token must then be rejected as superseded.
#[allow(clippy::too_many_arguments)]
fn run_revocation(
    cluster: &Cluster,
    dir: &std::path::Path,
    backend: Backend,
    field: &FieldParams,
    owner: &hermes_core::protocol::Owner,
    bd: &BookingDetails,
    vehicle: &mut hermes_core::protocol::Vehicle,
    consumer: &Consumer,
    original: hermes_core::protocol::ConsumerRetrieval,
    original_ts: u64,
    kems: &[hermes_core::protocol::KemKeyPair; 3],
    rng: &mut ChaCha12Rng,
) -> Result<i32> {
    // The owner acts alone: it presents with its own certificate, so the
    // revocation record pins that certificate's digest.
    let presenter = Consumer::new("owner-presenter", field, rng);
    let mut owner_keys = owner.keys.clone();
    let keys = owner_keys.derive(1).map_err(|e| anyhow::anyhow!("{e}"))?;
    let revoked_bd = BookingDetails {
        cert_hash: presenter.cert.digest(),
        vehicle_id: bd.vehicle_id,
        location: bd.location,
        cd_start: 0,
        cd_end: 0,
        cd_flags: REVOKED_FLAG,
        access_rights: 0,
        booking_id: bd.booking_id,
    };
    let mimc = hermes_core::mimc::MimcParams::for_field(field);
    let sealed: [Vec<u8>; 3] = {
        let pubs: [[u8; 32]; 3] = std::array::from_fn(|i| kems[i].public);
        hermes_core::protocol::make_sealed_bundles(backend, &mimc, &keys, &pubs, rng)
    };
    let m = SignedBooking::sign(revoked_bd.clone(), &owner.signing)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let (m_shares, targets) = owner.share_signed_booking(backend, field, &m, rng);
    let ts2 = request_generation(
        cluster,
        owner,
        backend,
        revoked_bd.booking_id,
        &sealed,
        &m_shares,
        &targets,
        rng,
    )?;
    anyhow::ensure!(ts2 > original_ts, "revocation must publish after the original");
    println!("revocation published at ts {ts2}");

    // The owner retrieves its own publication and forwards it.
    let ledger = LedgerClient::new(&cluster.ledger_url);
    let tag = hermes_core::protocol::expected_tag(backend, &mimc, &keys, &revoked_bd);
    let entry = ledger.query_by_tag(&tag)?.context("revocation entry missing")?;
    let revocation = retrieve_entry(backend, field, &keys, &revoked_bd, &entry.c, &entry.tag)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let req = AccessRequest {
        at: revocation.at,
        vehicle_id: revoked_bd.vehicle_id,
        cert: presenter.cert.clone(),
        ledger_ts: ts2,
        action: 0b001,
    };
    match present_token(vehicle, &presenter, &req, rng) {
        AccessDecision::Rejected(RejectionReason::Revoked) => {
            println!("vehicle recorded the revocation");
        }
        other => bail!("revocation token mishandled: {other:?}"),
    }

    // The original token is now stale.
    let req = AccessRequest {
        at: original.at,
        vehicle_id: bd.vehicle_id,
        cert: consumer.cert.clone(),
        ledger_ts: original_ts,
        action: 0b001,
    };
    match present_token(vehicle, consumer, &req, rng) {
        AccessDecision::Rejected(RejectionReason::Superseded) => {
            println!("original token rejected as superseded; artifacts in {}", dir.display());
            Ok(0)
        }
        other => bail!("original token not superseded: {other:?}"),
    }
}
