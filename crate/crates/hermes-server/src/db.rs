//! Embedded share store: registration rows keyed by (owner, row index),
//! persisted as a JSON file, plus per-session audit records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use hermes_core::protocol::{AuditRecord, ServerRow};

use crate::{Result, ServerError};

#[derive(Default, serde::Serialize, serde::Deserialize)]
struct DbFile {
    rows: BTreeMap<String, Vec<ServerRow>>,
}

/// Rows are guarded by a readers-writer lock; audit records are written
/// with exclusive per-session access (one file per session).
pub struct ServerDb {
    root: PathBuf,
    rows: RwLock<BTreeMap<String, Vec<ServerRow>>>,
}

impl ServerDb {
    pub fn open(root: &Path) -> Result<ServerDb> {
        fs::create_dir_all(root)?;
        fs::create_dir_all(root.join("audit"))?;
        let rows_path = root.join("rows.json");
        let rows = if rows_path.exists() {
            let text = fs::read_to_string(&rows_path)?;
            serde_json::from_str::<DbFile>(&text)
                .map_err(|e| ServerError::Db(format!("corrupt row store: {e}")))?
                .rows
        } else {
            BTreeMap::new()
        };
        Ok(ServerDb { root: root.to_path_buf(), rows: RwLock::new(rows) })
    }

    fn persist(&self, rows: &BTreeMap<String, Vec<ServerRow>>) -> Result<()> {
        let text = serde_json::to_string_pretty(&DbFile { rows: rows.clone() })
            .map_err(|e| ServerError::Db(e.to_string()))?;
        fs::write(self.root.join("rows.json"), text)?;
        Ok(())
    }

    /// Stores registration rows; a duplicate (owner, row index) is refused.
    pub fn load_registration(&self, new_rows: &[ServerRow]) -> Result<()> {
        let mut rows = self.rows.write().unwrap();
        for r in new_rows {
            let owner_rows = rows.entry(r.owner_id.clone()).or_default();
            if owner_rows.iter().any(|e| e.row_id == r.row_id) {
                return Err(ServerError::Db(format!(
                    "row {} already registered for owner {}",
                    r.row_id, r.owner_id
                )));
            }
            owner_rows.push(r.clone());
        }
        self.persist(&rows)
    }

    pub fn rows_for_owner(&self, owner_id: &str) -> Option<Vec<ServerRow>> {
        self.rows.read().unwrap().get(owner_id).cloned()
    }

    pub fn owner_row_count(&self, owner_id: &str) -> usize {
        self.rows
            .read()
            .unwrap()
            .get(owner_id)
            .map_or(0, |v| v.len())
    }

    pub fn write_audit_record(&self, record: &AuditRecord) -> Result<PathBuf> {
        let path = self
            .root
            .join("audit")
            .join(format!("{}-p{}.json", record.session_id, record.party));
        fs::write(&path, record.to_json())?;
        Ok(path)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(owner: &str, row_id: u32) -> ServerRow {
        ServerRow {
            owner_id: owner.into(),
            row_id,
            id_share_field: vec![1, 2],
            key_share_field: vec![3, 4],
            id_share_bits: vec![5],
            key_share_bits: vec![6],
        }
    }

    #[test]
    fn registration_round_trip_and_duplicate_refusal() {
        let dir = tempfile::tempdir().unwrap();
        let db = ServerDb::open(dir.path()).unwrap();
        db.load_registration(&[sample_row("o1", 0), sample_row("o1", 1)]).unwrap();
        assert_eq!(db.owner_row_count("o1"), 2);
        assert!(db.load_registration(&[sample_row("o1", 1)]).is_err());
        // Still two rows after the refused load.
        assert_eq!(db.owner_row_count("o1"), 2);

        // Reload from disk.
        drop(db);
        let db = ServerDb::open(dir.path()).unwrap();
        assert_eq!(db.owner_row_count("o1"), 2);
        assert_eq!(db.rows_for_owner("o1").unwrap()[1].row_id, 1);
        assert!(db.rows_for_owner("nobody").is_none());
    }
}
