//! Control-plane HTTP daemon and session runner.

use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use hermes_core::eqz::EqzConfig;
use hermes_core::field::FieldParams;
use hermes_core::protocol::{
    step2_generate, KeyBundleShare, MShares, ProtocolMessage, ServerRow, Step2Inputs,
};
use hermes_core::protocol::harness::decode_db_rows;
use hermes_core::share::RepShare;
use hermes_core::tape::PreprocessingTape;
use hermes_core::transport::connect_tcp;
use hermes_ledger::LedgerClient;

use crate::db::ServerDb;
use crate::{Result, ServerConfig, ServerError};

pub struct VsspServer {
    config: ServerConfig,
    db: ServerDb,
    field: FieldParams,
    tape: Mutex<PreprocessingTape>,
    /// One session at a time; the data plane is exclusive to it.
    session_lock: Mutex<()>,
    data_listener: TcpListener,
    ledger: LedgerClient,
}

pub struct VsspServerHandle {
    pub addr: String,
    pub data_addr: String,
    shutdown: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl Drop for VsspServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl VsspServer {
    /// Binds the control and data planes and serves until the handle drops.
    pub fn start(config: ServerConfig) -> Result<VsspServerHandle> {
        let field = FieldParams::production();
        let tape_bytes = std::fs::read(&config.tape_path)?;
        let tape = PreprocessingTape::decode(&tape_bytes, &field)?;
        if tape.party != config.party {
            return Err(ServerError::BadRequest(format!(
                "tape is for party {}, server is party {}",
                tape.party.0, config.party.0
            )));
        }
        let db = ServerDb::open(&config.db_path)?;
        let data_listener = TcpListener::bind(&config.data_listen)
            .map_err(|e| ServerError::Http(format!("data bind failed: {e}")))?;
        let data_addr = data_listener.local_addr()?.to_string();
        let control = tiny_http::Server::http(&config.listen)
            .map_err(|e| ServerError::Http(format!("control bind failed: {e}")))?;
        let addr = format!(
            "127.0.0.1:{}",
            control.server_addr().to_ip().unwrap().port()
        );
        let ledger = LedgerClient::new(&config.ledger_url);
        let server = Arc::new(VsspServer {
            config,
            db,
            field,
            tape: Mutex::new(tape),
            session_lock: Mutex::new(()),
            data_listener,
            ledger,
        });
        let shutdown = Arc::new(AtomicBool::new(false));
        let shutdown2 = shutdown.clone();
        let join = std::thread::spawn(move || {
            loop {
                match control.recv_timeout(std::time::Duration::from_millis(100)) {
                    Ok(Some(req)) => {
                        let server = server.clone();
                        // Sessions are long; answer each request on its own
                        // thread and serialize MPC inside.
                        std::thread::spawn(move || server.handle(req));
                    }
                    Ok(None) => {
                        if shutdown2.load(Ordering::SeqCst) {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(VsspServerHandle { addr, data_addr, shutdown, join: Some(join) })
    }

    fn handle(&self, mut req: tiny_http::Request) {
        let url = req.url().to_string();
        let method = req.method().clone();
        let mut body = String::new();
        let _ = req.as_reader().read_to_string(&mut body);
        let (status, reply) = match (method, url.as_str()) {
            (tiny_http::Method::Post, "/register") => match self.handle_register(&body) {
                Ok(n) => (200, serde_json::json!({"ok": true, "rows": n})),
                Err(e) => (400, serde_json::json!({"error": e.to_string()})),
            },
            (tiny_http::Method::Post, "/at-gen-req") => match self.handle_at_gen(&body) {
                Ok(ts) => (200, serde_json::json!({"ok": true, "ts": ts})),
                Err(e) => (500, serde_json::json!({"error": e.to_string()})),
            },
            (tiny_http::Method::Get, "/health") => (
                200,
                serde_json::json!({"ok": true, "party": self.config.party.0}),
            ),
            _ => (404, serde_json::json!({"error": "no such endpoint"})),
        };
        let response = tiny_http::Response::from_string(reply.to_string())
            .with_status_code(status)
            .with_header(
                tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                    .unwrap(),
            );
        let _ = req.respond(response);
    }

    fn handle_register(&self, body: &str) -> Result<usize> {
        #[derive(serde::Deserialize)]
        struct RegisterBody {
            rows: Vec<ServerRow>,
        }
        let parsed: RegisterBody = serde_json::from_str(body)
            .map_err(|e| ServerError::BadRequest(format!("bad register body: {e}")))?;
        self.db.load_registration(&parsed.rows)?;
        Ok(parsed.rows.len())
    }

    fn handle_at_gen(&self, body: &str) -> Result<u64> {
        let msg = ProtocolMessage::from_json(body)
            .map_err(|e| ServerError::BadRequest(e.to_string()))?;
        let ProtocolMessage::AtGenReq {
            session_id,
            owner_id,
            booking_id,
            backend,
            enc_bundle,
            m_shares,
            target_id_share,
        } = msg
        else {
            return Err(ServerError::BadRequest("expected AT_GEN_REQ".into()));
        };
        if self.config.fail_sessions {
            return Err(ServerError::BadRequest("server is failing sessions".into()));
        }
        let backend = hermes_core::protocol::Backend::parse(&backend)
            .map_err(|e| ServerError::BadRequest(e.to_string()))?;
        if backend != self.config.backend {
            return Err(ServerError::BadRequest(format!(
                "backend {} not enabled on this server",
                backend.as_str()
            )));
        }
        let session_id: [u8; 16] = hex::decode(&session_id)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| ServerError::BadRequest("bad session id".into()))?;

        // Assemble this party's inputs: decrypt the key bundle, decode the
        // shares, fetch the owner's rows.
        let party = self.config.party;
        let sealed = B64
            .decode(&enc_bundle)
            .map_err(|e| ServerError::BadRequest(format!("bad bundle encoding: {e}")))?;
        let bundle_bytes = hermes_core::protocol::kem_decrypt(&self.config.kem, &sealed)?;
        let bundle = KeyBundleShare::decode(party, &self.field, &bundle_bytes)?;
        let m_bytes = B64
            .decode(&m_shares)
            .map_err(|e| ServerError::BadRequest(format!("bad share encoding: {e}")))?;
        let m_shares = MShares::decode(party, &self.field, &m_bytes)?;
        let target = match target_id_share {
            Some(t) => {
                let bytes = B64
                    .decode(&t)
                    .map_err(|e| ServerError::BadRequest(format!("bad target encoding: {e}")))?;
                Some(RepShare::decode(party, &self.field, &bytes)?)
            }
            None => None,
        };
        let rows = self
            .db
            .rows_for_owner(&owner_id)
            .ok_or_else(|| ServerError::UnknownOwner(owner_id.clone()))?;
        let rows = decode_db_rows(backend, &self.field, party, &rows)?;

        let inputs = Step2Inputs {
            session_id,
            booking_id,
            owner_id,
            bundle,
            m_shares,
            target_id_share: target,
            rows,
            eqz: EqzConfig::production(),
        };

        // One MPC session at a time; the data listener belongs to it.
        let _guard = self.session_lock.lock().unwrap();
        let chan = connect_tcp(party, session_id, &self.data_listener, &self.config.peers)?;
        let mut tape = self.tape.lock().unwrap();
        let output = step2_generate(chan, &mut tape, &inputs)?;
        drop(tape);

        // Publish (idempotent across the three servers), persist the audit
        // record, acknowledge with the publication timestamp.
        let mut last_err = None;
        let mut ts = None;
        for _ in 0..3 {
            match self.ledger.publish(&output.c_uc, &output.auth_tag) {
                Ok(t) => {
                    ts = Some(t);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let ts = match ts {
            Some(t) => t,
            None => return Err(ServerError::Ledger(last_err.unwrap())),
        };
        self.db.write_audit_record(&output.audit)?;
        Ok(ts)
    }
}

/// Thin client helpers for the control plane (owner side and tooling).
pub mod client {
    use super::*;

    pub fn health(url: &str) -> Result<u8> {
        let resp = ureq::get(&format!("{url}/health"))
            .call()
            .map_err(|e| ServerError::Http(format!("health failed: {e}")))?;
        let v: serde_json::Value = resp
            .into_json()
            .map_err(|e| ServerError::Http(e.to_string()))?;
        Ok(v["party"].as_u64().unwrap_or(255) as u8)
    }

    pub fn register(url: &str, rows: &[ServerRow]) -> Result<()> {
        let resp = ureq::post(&format!("{url}/register"))
            .send_json(serde_json::json!({"rows": rows}))
            .map_err(|e| ServerError::Http(format!("register failed: {e}")))?;
        let v: serde_json::Value = resp
            .into_json()
            .map_err(|e| ServerError::Http(e.to_string()))?;
        if v["ok"].as_bool() != Some(true) {
            return Err(ServerError::Http(format!("register rejected: {v}")));
        }
        Ok(())
    }

    /// Sends the token-generation request and waits for the publication
    /// acknowledgement.
    pub fn at_gen_request(url: &str, msg: &ProtocolMessage) -> Result<u64> {
        let resp = ureq::post(&format!("{url}/at-gen-req"))
            .timeout(std::time::Duration::from_secs(60))
            .send_string(&msg.to_json())
            .map_err(|e| ServerError::Http(format!("at-gen-req failed: {e}")))?;
        let v: serde_json::Value = resp
            .into_json()
            .map_err(|e| ServerError::Http(e.to_string()))?;
        v["ts"]
            .as_u64()
            .ok_or_else(|| ServerError::Http(format!("no ts in response: {v}")))
    }
}
