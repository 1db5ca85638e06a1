//! File-backed append-only entry store.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};

use crate::{LedgerError, Result};

/// One published entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// Monotone sequence number; defines the public order.
    pub ts: u64,
    /// Wall-clock seconds at publication, advisory only.
    pub wall: u64,
    #[serde(with = "b64")]
    pub c: Vec<u8>,
    #[serde(with = "b64")]
    pub tag: Vec<u8>,
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Vec<u8>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(flatten)]
    entry: LedgerEntry,
    /// SHA3-256 over `ts || wall || c || tag`.
    hash: String,
}

fn content_hash(e: &LedgerEntry) -> String {
    let mut h = Sha3_256::new();
    h.update(e.ts.to_le_bytes());
    h.update(e.wall.to_le_bytes());
    h.update((e.c.len() as u64).to_le_bytes());
    h.update(&e.c);
    h.update(&e.tag);
    hex::encode(h.finalize())
}

fn dedup_key(c: &[u8], tag: &[u8]) -> [u8; 32] {
    let mut h = Sha3_256::new();
    h.update((c.len() as u64).to_le_bytes());
    h.update(c);
    h.update(tag);
    h.finalize().into()
}

/// Crash injection for recovery tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Failpoint {
    #[default]
    None,
    /// Persist the entry, then fail before acknowledging.
    CrashAfterWrite,
}

struct Inner {
    entries: Vec<LedgerEntry>,
    by_payload: HashMap<[u8; 32], u64>,
    by_tag: HashMap<Vec<u8>, u64>,
    file: Option<File>,
}

/// Thread-safe append-only store. A single writer serializes appends;
/// reads run concurrently against the immutable prefix.
pub struct LedgerStore {
    inner: RwLock<Inner>,
    path: Option<PathBuf>,
    pub failpoint: std::sync::atomic::AtomicU8,
}

impl LedgerStore {
    /// Purely in-memory store (tests, benchmarks).
    pub fn in_memory() -> LedgerStore {
        LedgerStore {
            inner: RwLock::new(Inner {
                entries: Vec::new(),
                by_payload: HashMap::new(),
                by_tag: HashMap::new(),
                file: None,
            }),
            path: None,
            failpoint: std::sync::atomic::AtomicU8::new(0),
        }
    }

    /// Opens (or creates) a file-backed store, replaying existing lines.
    pub fn open(path: &Path) -> Result<LedgerStore> {
        let mut entries = Vec::new();
        let mut by_payload = HashMap::new();
        let mut by_tag = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: Line = serde_json::from_str(&line).map_err(|e| {
                    LedgerError::Corrupt { line: idx + 1, msg: e.to_string() }
                })?;
                if content_hash(&parsed.entry) != parsed.hash {
                    return Err(LedgerError::Corrupt {
                        line: idx + 1,
                        msg: "content hash mismatch".into(),
                    });
                }
                if let Some(last) = entries.last() {
                    let last: &LedgerEntry = last;
                    if parsed.entry.ts <= last.ts {
                        return Err(LedgerError::Corrupt {
                            line: idx + 1,
                            msg: "sequence numbers not increasing".into(),
                        });
                    }
                }
                by_payload.insert(dedup_key(&parsed.entry.c, &parsed.entry.tag), parsed.entry.ts);
                by_tag.insert(parsed.entry.tag.clone(), parsed.entry.ts);
                entries.push(parsed.entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LedgerStore {
            inner: RwLock::new(Inner { entries, by_payload, by_tag, file: Some(file) }),
            path: Some(path.to_path_buf()),
            failpoint: std::sync::atomic::AtomicU8::new(0),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn set_failpoint(&self, fp: Failpoint) {
        self.failpoint
            .store(fp as u8, std::sync::atomic::Ordering::SeqCst);
    }

    /// Appends an entry (idempotent per payload): returns its sequence
    /// number, durable before the call returns.
    pub fn publish(&self, c: &[u8], tag: &[u8]) -> Result<u64> {
        let key = dedup_key(c, tag);
        let mut inner = self.inner.write().unwrap();
        if let Some(&ts) = inner.by_payload.get(&key) {
            return Ok(ts);
        }
        let ts = inner.entries.last().map_or(1, |e| e.ts + 1);
        let entry = LedgerEntry {
            ts,
            wall: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            c: c.to_vec(),
            tag: tag.to_vec(),
        };
        if let Some(file) = inner.file.as_mut() {
            let line = Line { hash: content_hash(&entry), entry: entry.clone() };
            let mut bytes = serde_json::to_vec(&line)
                .map_err(|e| LedgerError::Storage(e.to_string()))?;
            bytes.push(b'\n');
            file.write_all(&bytes)?;
            file.sync_data()?;
        }
        if self.failpoint.load(std::sync::atomic::Ordering::SeqCst)
            == Failpoint::CrashAfterWrite as u8
        {
            // Simulated crash between durability and acknowledgement.
            return Err(LedgerError::Storage("injected crash after write".into()));
        }
        inner.by_payload.insert(key, ts);
        inner.by_tag.insert(tag.to_vec(), ts);
        inner.entries.push(entry);
        Ok(ts)
    }

    /// Entries with `ts > since`, ascending.
    pub fn query_since(&self, since: u64) -> Vec<LedgerEntry> {
        let inner = self.inner.read().unwrap();
        let start = inner.entries.partition_point(|e| e.ts <= since);
        inner.entries[start..].to_vec()
    }

    /// Point lookup by authentication tag.
    pub fn query_by_tag(&self, tag: &[u8]) -> Option<LedgerEntry> {
        let inner = self.inner.read().unwrap();
        let ts = *inner.by_tag.get(tag)?;
        inner.entries.iter().find(|e| e.ts == ts).cloned()
    }

    pub fn by_ts(&self, ts: u64) -> Option<LedgerEntry> {
        let inner = self.inner.read().unwrap();
        inner.entries.iter().find(|e| e.ts == ts).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
