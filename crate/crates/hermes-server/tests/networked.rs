//! Networked end-to-end checks: three server daemons, an HTTP ledger, and
//! the owner/consumer/vehicle roles driving a real booking over TCP.

use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

use hermes_core::field::FieldParams;
use hermes_core::protocol::harness::{build_scenario, required_tape_counts, ScenarioConfig};
use hermes_core::protocol::{present_token, AccessRequest, Backend, Vehicle};
use hermes_core::share::PartyId;
use hermes_core::tape::dealer_generate;
use hermes_ledger::{LedgerClient, LedgerServer, LedgerStore};
use hermes_server::{client, ServerConfig, VsspServer, VsspServerHandle};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

struct Cluster {
    _ledger_server: LedgerServer,
    ledger_url: String,
    handles: Vec<VsspServerHandle>,
    urls: [String; 3],
}

fn free_addrs(n: usize) -> Vec<String> {
    // Reserve distinct ephemeral ports, then release them for the servers.
    let listeners: Vec<TcpListener> =
        (0..n).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    listeners
        .iter()
        .map(|l| format!("127.0.0.1:{}", l.local_addr().unwrap().port()))
        .collect()
}

fn start_cluster(
    dir: &Path,
    backend: Backend,
    scenario: &hermes_core::protocol::harness::Scenario,
    n_vehicles: usize,
    fail_party: Option<u8>,
) -> Cluster {
    let store = Arc::new(LedgerStore::open(&dir.join("ledger.jsonl")).unwrap());
    let ledger_server = LedgerServer::start(store, "127.0.0.1:0").unwrap();
    let ledger_url = ledger_server.url();

    // Tapes sized for a couple of sessions.
    let mut counts = required_tape_counts(backend, n_vehicles);
    counts.zero_shares *= 4;
    counts.and_zero_shares *= 4;
    counts.random_bits *= 4;
    counts.cube_tuples *= 4;
    let tapes = dealer_generate(&FieldParams::production(), counts, [77u8; 32]);

    let data_addrs: [String; 3] = free_addrs(3).try_into().unwrap();
    let mut handles = Vec::new();
    let mut urls = Vec::new();
    for (i, tape) in tapes.into_iter().enumerate() {
        let tape_path = dir.join(format!("tape-{i}.bin"));
        std::fs::write(&tape_path, tape.encode()).unwrap();
        let config = ServerConfig {
            party: PartyId(i as u8),
            listen: "127.0.0.1:0".into(),
            data_listen: data_addrs[i].clone(),
            peers: data_addrs.clone(),
            ledger_url: ledger_url.clone(),
            db_path: dir.join(format!("db-{i}")),
            tape_path,
            backend,
            kem: scenario.server_kems[i].clone(),
            fail_sessions: fail_party == Some(i as u8),
        };
        let handle = VsspServer::start(config).unwrap();
        urls.push(format!("http://{}", handle.addr));
        handles.push(handle);
    }
    Cluster {
        _ledger_server: ledger_server,
        ledger_url,
        handles,
        urls: urls.try_into().unwrap(),
    }
}

fn register_all(cluster: &Cluster, scenario: &hermes_core::protocol::harness::Scenario) {
    for i in 0..3 {
        client::register(&cluster.urls[i], &scenario.server_rows[i]).unwrap();
    }
}

/// Sends the three requests concurrently and returns each server's ack.
fn drive_generation(
    cluster: &Cluster,
    msgs: [hermes_core::protocol::ProtocolMessage; 3],
) -> Vec<hermes_server::Result<u64>> {
    let mut threads = Vec::new();
    for (url, msg) in cluster.urls.iter().cloned().zip(msgs) {
        threads.push(std::thread::spawn(move || client::at_gen_request(&url, &msg)));
    }
    threads.into_iter().map(|t| t.join().unwrap()).collect()
}

#[test]
fn full_networked_booking_grants_access() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = build_scenario(&ScenarioConfig::new(Backend::Mimc, 2, 9001)).unwrap();
    let cluster = start_cluster(dir.path(), Backend::Mimc, &scenario, 2, None);
    register_all(&cluster, &scenario);
    for url in &cluster.urls {
        client::health(url).unwrap();
    }

    let msgs = scenario.owner.at_gen_messages(
        Backend::Mimc,
        scenario.session_id,
        scenario.booking_id,
        &scenario.sealed_bundles,
        &scenario.m_shares,
        &scenario.target_id_shares,
    );
    let acks = drive_generation(&cluster, msgs);
    let ts: Vec<u64> = acks.into_iter().map(|a| a.unwrap()).collect();
    // Three publishers, one entry: identical acknowledgements.
    assert_eq!(ts[0], ts[1]);
    assert_eq!(ts[1], ts[2]);

    let ledger = LedgerClient::new(&cluster.ledger_url);
    let entries = ledger.query_since(0).unwrap();
    assert_eq!(entries.len(), 1, "duplicate publications must deduplicate");

    // Step 3 over the anonymous point query.
    let expected_tag =
        scenario
            .consumer
            .expected_tag(Backend::Mimc, &scenario.keys, &scenario.bd);
    let entry = ledger.query_by_tag(&expected_tag).unwrap().unwrap();
    let retrieval = scenario
        .consumer
        .retrieve(Backend::Mimc, &scenario.keys, &scenario.bd, &entry.c, &entry.tag)
        .unwrap();

    // Step 4.
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let mut vehicle = Vehicle::new(
        scenario.bd.vehicle_id,
        scenario.vehicle_key(),
        scenario.owner.verifying.clone(),
        &FieldParams::production(),
        &mut rng,
    );
    vehicle.clock = scenario.bd.cd_start + 60;
    let req = AccessRequest {
        at: retrieval.at,
        vehicle_id: retrieval.vehicle_id,
        cert: scenario.consumer.cert.clone(),
        ledger_ts: entry.ts,
        action: 0b001,
    };
    assert!(present_token(&mut vehicle, &scenario.consumer, &req, &mut rng).granted());

    // The oracle agrees with what the cluster published.
    let expected = scenario.oracle().unwrap();
    assert_eq!(entry.c, expected.c_uc);
    assert_eq!(entry.tag, expected.auth_tag);
}

#[test]
fn crashed_server_aborts_session_and_retry_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = build_scenario(&ScenarioConfig::new(Backend::Mimc, 1, 9002)).unwrap();
    // Server 2 refuses sessions.
    let cluster = start_cluster(dir.path(), Backend::Mimc, &scenario, 1, Some(2));
    register_all(&cluster, &scenario);

    let msgs = scenario.owner.at_gen_messages(
        Backend::Mimc,
        scenario.session_id,
        scenario.booking_id,
        &scenario.sealed_bundles,
        &scenario.m_shares,
        &scenario.target_id_shares,
    );
    let acks = drive_generation(&cluster, msgs.clone());
    assert!(acks.iter().any(|a| a.is_err()), "session must fail with a dead server");
    let ledger = LedgerClient::new(&cluster.ledger_url);
    assert!(ledger.query_since(0).unwrap().is_empty(), "no ledger entry may appear");

    // Restart the failed server in healthy mode and retry the same booking.
    let urls = cluster.urls.clone();
    let ledger_url = cluster.ledger_url.clone();
    drop(cluster);
    let scenario2 = scenario; // same shares, fresh session attempt
    let store = Arc::new(LedgerStore::open(&dir.path().join("ledger.jsonl")).unwrap());
    let ledger_server = LedgerServer::start(store, "127.0.0.1:0").unwrap();
    let _ = (urls, ledger_url);
    let cluster = {
        // Rebuild all three daemons against the replayed ledger file.
        let counts = required_tape_counts(Backend::Mimc, 1);
        let tapes = dealer_generate(&FieldParams::production(), counts, [78u8; 32]);
        let data_addrs: [String; 3] = free_addrs(3).try_into().unwrap();
        let mut handles = Vec::new();
        let mut urls = Vec::new();
        for (i, tape) in tapes.into_iter().enumerate() {
            let tape_path = dir.path().join(format!("tape-retry-{i}.bin"));
            std::fs::write(&tape_path, tape.encode()).unwrap();
            let config = ServerConfig {
                party: PartyId(i as u8),
                listen: "127.0.0.1:0".into(),
                data_listen: data_addrs[i].clone(),
                peers: data_addrs.clone(),
                ledger_url: ledger_server.url(),
                db_path: dir.path().join(format!("db-{i}")),
                tape_path,
                backend: Backend::Mimc,
                kem: scenario2.server_kems[i].clone(),
                fail_sessions: false,
            };
            let handle = VsspServer::start(config).unwrap();
            urls.push(format!("http://{}", handle.addr));
            handles.push(handle);
        }
        Cluster {
            ledger_url: ledger_server.url(),
            _ledger_server: ledger_server,
            handles,
            urls: urls.try_into().unwrap(),
        }
    };
    let acks = drive_generation(&cluster, msgs);
    for a in acks {
        a.unwrap();
    }
    let ledger = LedgerClient::new(&cluster.ledger_url);
    assert_eq!(ledger.query_since(0).unwrap().len(), 1, "retry publishes exactly once");
    drop(cluster);
}

#[test]
fn persisted_server_state_contains_no_cleartext_secrets() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = build_scenario(&ScenarioConfig::new(Backend::Mimc, 1, 9003)).unwrap();
    let cluster = start_cluster(dir.path(), Backend::Mimc, &scenario, 1, None);
    register_all(&cluster, &scenario);
    let msgs = scenario.owner.at_gen_messages(
        Backend::Mimc,
        scenario.session_id,
        scenario.booking_id,
        &scenario.sealed_bundles,
        &scenario.m_shares,
        &scenario.target_id_shares,
    );
    for a in drive_generation(&cluster, msgs) {
        a.unwrap();
    }
    drop(cluster);

    // Sentinels: canonical booking bytes, the session keys, the vehicle key.
    let mut sentinels: Vec<Vec<u8>> = vec![
        scenario.bd.to_bytes().to_vec(),
        scenario.bd.to_bytes()[0..32].to_vec(),
        scenario.keys.enc.encode(),
        scenario.keys.tag_enc.encode(),
        scenario.keys.tag_mac.encode(),
        scenario.vehicle_key().to_vec(),
    ];
    // Base64 forms as well, since persisted stores encode binary columns.
    use base64::engine::general_purpose::STANDARD as B64;
    use base64::Engine;
    let b64: Vec<Vec<u8>> = sentinels.iter().map(|s| B64.encode(s).into_bytes()).collect();
    sentinels.extend(b64);

    let mut scanned = 0;
    for entry in walk(dir.path()) {
        // The ledger file legitimately holds the public ciphertext; servers'
        // stores must hold no sentinel either way.
        let data = std::fs::read(&entry).unwrap();
        for s in &sentinels {
            assert!(
                !contains(&data, s),
                "sentinel found in {}",
                entry.display()
            );
        }
        scanned += 1;
    }
    assert!(scanned >= 4, "expected to scan server stores, found {scanned} files");
}

fn walk(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() || haystack.len() < needle.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn server_sources_never_touch_cleartext_protocol_types() {
    // The daemon must be structurally unable to materialize booking
    // details, session keys or the manufacturer database: its sources may
    // not name those constructors at all.
    let src_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let forbidden = [
        "BookingDetails",
        "SessionKeys",
        "VmDatabase",
        "SignedBooking",
        "kdf(",
        "mimc_decrypt",
        "ctr_decrypt",
        "vehicle_key_field",
        "clear_oracle",
    ];
    for file in walk(&src_dir) {
        let text = std::fs::read_to_string(&file).unwrap();
        for f in forbidden {
            assert!(
                !text.contains(f),
                "server source {} references cleartext type {f}",
                file.display()
            );
        }
    }
}

#[test]
fn backend_mismatch_is_refused_before_any_session_work() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = build_scenario(&ScenarioConfig::new(Backend::Aes, 1, 9004)).unwrap();
    // Cluster runs the field backend; the request asks for the binary one.
    let cluster = start_cluster(dir.path(), Backend::Mimc, &scenario, 1, None);
    register_all(&cluster, &scenario);
    let msgs = scenario.owner.at_gen_messages(
        Backend::Aes,
        scenario.session_id,
        scenario.booking_id,
        &scenario.sealed_bundles,
        &scenario.m_shares,
        &scenario.target_id_shares,
    );
    for a in drive_generation(&cluster, msgs) {
        let err = a.expect_err("mismatched backend must be refused");
        assert!(err.to_string().contains("not enabled"), "got: {err}");
    }
    let ledger = LedgerClient::new(&cluster.ledger_url);
    assert!(ledger.query_since(0).unwrap().is_empty());
}
