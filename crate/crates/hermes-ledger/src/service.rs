//! HTTP face of the ledger.
//!
//! `POST /publish {"c": base64, "tag": base64} -> {"ts": N}`,
//! `GET /entries?since=N`, `GET /entry/by-tag/{hex}`. The query endpoints
//! require no authentication and log no caller identity; anonymous
//! retrieval is assumed to happen over an anonymizing channel outside this
//! artifact's scope.

use std::net::ToSocketAddrs;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::Deserialize;

use crate::{LedgerEntry, LedgerError, LedgerStore, Result};

pub struct LedgerServer {
    store: Arc<LedgerStore>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    pub addr: String,
}

#[derive(Deserialize)]
struct PublishBody {
    c: String,
    tag: String,
}

impl LedgerServer {
    /// Serves the store on `addr` (use port 0 for an ephemeral port).
    pub fn start(store: Arc<LedgerStore>, addr: impl ToSocketAddrs) -> Result<LedgerServer> {
        let server = tiny_http::Server::http(addr)
            .map_err(|e| LedgerError::Http(format!("bind failed: {e}")))?;
        let actual = format!("127.0.0.1:{}", server.server_addr().to_ip().unwrap().port());
        let shutdown = Arc::new(AtomicBool::new(false));
        let store2 = store.clone();
        let shutdown2 = shutdown.clone();
        let handle = std::thread::spawn(move || {
            loop {
                match server.recv_timeout(std::time::Duration::from_millis(100)) {
                    Ok(Some(req)) => handle_request(&store2, req),
                    Ok(None) => {
                        if shutdown2.load(Ordering::SeqCst) {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(LedgerServer { store, shutdown, handle: Some(handle), addr: actual })
    }

    pub fn store(&self) -> &Arc<LedgerStore> {
        &self.store
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for LedgerServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn respond_json(req: tiny_http::Request, status: u16, body: serde_json::Value) {
    let data = body.to_string();
    let response = tiny_http::Response::from_string(data)
        .with_status_code(status)
        .with_header(
            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                .unwrap(),
        );
    let _ = req.respond(response);
}

fn entry_json(e: &LedgerEntry) -> serde_json::Value {
    serde_json::json!({
        "ts": e.ts,
        "wall": e.wall,
        "c": B64.encode(&e.c),
        "tag": B64.encode(&e.tag),
    })
}

fn handle_request(store: &LedgerStore, mut req: tiny_http::Request) {
    let url = req.url().to_string();
    let method = req.method().clone();
    match (method, url.as_str()) {
        (tiny_http::Method::Post, "/publish") => {
            let mut body = String::new();
            if req.as_reader().read_to_string(&mut body).is_err() {
                return respond_json(req, 400, serde_json::json!({"error": "unreadable body"}));
            }
            let parsed: std::result::Result<PublishBody, _> = serde_json::from_str(&body);
            let Ok(parsed) = parsed else {
                return respond_json(req, 400, serde_json::json!({"error": "bad publish body"}));
            };
            let (Ok(c), Ok(tag)) = (B64.decode(&parsed.c), B64.decode(&parsed.tag)) else {
                return respond_json(req, 400, serde_json::json!({"error": "bad base64"}));
            };
            match store.publish(&c, &tag) {
                Ok(ts) => respond_json(req, 200, serde_json::json!({"ts": ts})),
                Err(e) => respond_json(req, 500, serde_json::json!({"error": e.to_string()})),
            }
        }
        (tiny_http::Method::Get, path) if path.starts_with("/entries") => {
            let since = path
                .split_once("since=")
                .and_then(|(_, v)| v.parse::<u64>().ok())
                .unwrap_or(0);
            let entries: Vec<_> = store.query_since(since).iter().map(entry_json).collect();
            respond_json(req, 200, serde_json::json!({"entries": entries}))
        }
        (tiny_http::Method::Get, path) if path.starts_with("/entry/by-tag/") => {
            let hex_tag = path.trim_start_matches("/entry/by-tag/");
            let Ok(tag) = hex::decode(hex_tag) else {
                return respond_json(req, 400, serde_json::json!({"error": "bad tag hex"}));
            };
            match store.query_by_tag(&tag) {
                Some(e) => respond_json(req, 200, entry_json(&e)),
                None => respond_json(req, 404, serde_json::json!({"error": "not found"})),
            }
        }
        (tiny_http::Method::Get, "/health") => respond_json(req, 200, serde_json::json!({"ok": true})),
        _ => respond_json(req, 404, serde_json::json!({"error": "no such endpoint"})),
    }
}

/// HTTP client for servers and consumers.
#[derive(Clone, Debug)]
pub struct LedgerClient {
    base: String,
}

impl LedgerClient {
    pub fn new(base_url: &str) -> LedgerClient {
        LedgerClient { base: base_url.trim_end_matches('/').to_string() }
    }

    pub fn publish(&self, c: &[u8], tag: &[u8]) -> Result<u64> {
        let resp = ureq::post(&format!("{}/publish", self.base))
            .send_json(serde_json::json!({"c": B64.encode(c), "tag": B64.encode(tag)}))
            .map_err(|e| LedgerError::Http(format!("publish failed: {e}")))?;
        let body: serde_json::Value = resp
            .into_json()
            .map_err(|e| LedgerError::Http(format!("bad publish response: {e}")))?;
        body["ts"]
            .as_u64()
            .ok_or_else(|| LedgerError::Http("publish response missing ts".into()))
    }

    pub fn query_since(&self, since: u64) -> Result<Vec<LedgerEntry>> {
        let resp = ureq::get(&format!("{}/entries?since={since}", self.base))
            .call()
            .map_err(|e| LedgerError::Http(format!("query failed: {e}")))?;
        let body: serde_json::Value = resp
            .into_json()
            .map_err(|e| LedgerError::Http(format!("bad entries response: {e}")))?;
        let entries = body["entries"]
            .as_array()
            .ok_or_else(|| LedgerError::Http("entries response malformed".into()))?;
        entries.iter().map(parse_entry).collect()
    }

    /// Point query; no caller identity accompanies this request.
    pub fn query_by_tag(&self, tag: &[u8]) -> Result<Option<LedgerEntry>> {
        let url = format!("{}/entry/by-tag/{}", self.base, hex::encode(tag));
        match ureq::get(&url).call() {
            Ok(resp) => {
                let body: serde_json::Value = resp
                    .into_json()
                    .map_err(|e| LedgerError::Http(format!("bad entry response: {e}")))?;
                Ok(Some(parse_entry(&body)?))
            }
            Err(ureq::Error::Status(404, _)) => Ok(None),
            Err(e) => Err(LedgerError::Http(format!("query failed: {e}"))),
        }
    }
}

fn parse_entry(v: &serde_json::Value) -> Result<LedgerEntry> {
    let get = |k: &str| -> Result<Vec<u8>> {
        B64.decode(v[k].as_str().unwrap_or_default())
            .map_err(|e| LedgerError::Http(format!("bad {k}: {e}")))
    };
    Ok(LedgerEntry {
        ts: v["ts"].as_u64().unwrap_or(0),
        wall: v["wall"].as_u64().unwrap_or(0),
        c: get("c")?,
        tag: get("tag")?,
    })
}
