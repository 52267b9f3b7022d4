//! Uploaded tables persisted as one JSON file each.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};
use tqk_core::api::TableMeta;
use tqk_core::UnifiedTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredTable {
    pub meta: TableMeta,
    pub table: UnifiedTable,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Corrupt { path: PathBuf, source: serde_json::Error },
}

/// Tables keyed by generated id. Readers share the lock; uploads and
/// deletes take it exclusively and touch disk before the index.
#[derive(Debug)]
pub struct TableStore {
    dir: PathBuf,
    tables: RwLock<BTreeMap<String, StoredTable>>,
}

impl TableStore {
    /// Opens `dir`, creating it if needed, and loads every `*.json` in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let mut tables = BTreeMap::new();
        for entry in std::fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let stored: StoredTable =
                serde_json::from_str(&text).map_err(|source| StoreError::Corrupt { path: path.clone(), source })?;
            tables.insert(stored.meta.id.clone(), stored);
        }
        Ok(TableStore { dir, tables: RwLock::new(tables) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn insert(&self, name: &str, mut table: UnifiedTable) -> Result<TableMeta, StoreError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        table.id.clone_from(&id);
        let uploaded_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let meta = TableMeta {
            id: id.clone(),
            name: name.to_string(),
            uploaded_at,
            rows: table.n_rows(),
            cols: table.n_cols(),
            header_rows: table.header_rows,
        };
        let stored = StoredTable { meta: meta.clone(), table };
        let path = self.path_for(&id);
        let mut tables = self.tables.write().expect("store lock poisoned");
        let json = serde_json::to_string(&stored).expect("stored table serializes");
        std::fs::write(&path, json).map_err(|source| StoreError::Io { path, source })?;
        tables.insert(id, stored);
        Ok(meta)
    }

    pub fn get(&self, id: &str) -> Option<StoredTable> {
        self.tables.read().expect("store lock poisoned").get(id).cloned()
    }

    /// Metadata sorted by upload time, then id.
    pub fn list(&self) -> Vec<TableMeta> {
        let mut metas: Vec<TableMeta> =
            self.tables.read().expect("store lock poisoned").values().map(|s| s.meta.clone()).collect();
        metas.sort_by(|a, b| (a.uploaded_at, &a.id).cmp(&(b.uploaded_at, &b.id)));
        metas
    }

    /// Removes the file and the entry; `false` when the id is unknown.
    pub fn delete(&self, id: &str) -> Result<bool, StoreError> {
        let mut tables = self.tables.write().expect("store lock poisoned");
        if !tables.contains_key(id) {
            return Ok(false);
        }
        let path = self.path_for(id);
        match std::fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(StoreError::Io { path, source }),
        }
        tables.remove(id);
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survives_reopen_and_delete_removes_file() {
        let dir = tempfile::tempdir().unwrap();
        let store = TableStore::open(dir.path()).unwrap();
        let t = UnifiedTable::from_text("x", &[vec!["a", "b"], vec!["1", "2"]], 1);
        let meta = store.insert("t.csv", t).unwrap();
        assert_eq!((meta.rows, meta.cols), (2, 2));
        drop(store);

        let store = TableStore::open(dir.path()).unwrap();
        let got = store.get(&meta.id).unwrap();
        assert_eq!(got.table.id, meta.id);
        assert_eq!(got.table.text(1, 1), "2");
        assert!(store.delete(&meta.id).unwrap());
        assert!(!store.delete(&meta.id).unwrap());
        assert!(!dir.path().join(format!("{}.json", meta.id)).exists());
        assert!(TableStore::open(dir.path()).unwrap().list().is_empty());
    }

    #[test]
    fn concurrent_inserts_get_distinct_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = TableStore::open(dir.path()).unwrap();
        let ids: Vec<String> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..16)
                .map(|i| {
                    let store = &store;
                    s.spawn(move || {
                        let t = UnifiedTable::from_text("x", &[vec![format!("c{i}")]], 1);
                        store.insert("t.csv", t).unwrap().id
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let unique: std::collections::HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), 16);
        assert_eq!(store.list().len(), 16);
    }
}
