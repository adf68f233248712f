//! Append-only annotation record log.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use vte_core::qc::{load_records, record_line, AnnotationRecord};
use vte_core::{Error, Result};

/// Records are kept in memory and mirrored to a JSON-lines file. Every
/// append writes all of its lines with a single call and syncs before
/// returning; nothing is ever rewritten or removed.
#[derive(Debug)]
pub struct RecordStore {
    path: PathBuf,
    records: Vec<AnnotationRecord>,
}

impl RecordStore {
    /// Opens `path`, loading any records already present. A missing file is
    /// created empty.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() {
            load_records(&path)?
        } else {
            File::create(&path).map_err(|e| Error::io(&path, e))?;
            Vec::new()
        };
        Ok(RecordStore { path, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, batch: &[AnnotationRecord]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let payload: String = batch.iter().map(record_line).collect();
        let mut file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(payload.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        self.records.extend_from_slice(batch);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use vte_core::corpus::Label;

    fn rec(pair: &str, worker: &str) -> AnnotationRecord {
        AnnotationRecord {
            pair_id: pair.into(),
            worker_id: worker.into(),
            label: Label::Contradiction,
            highlighted: [0, 2].into(),
            explanation: "no dog".into(),
            timestamp: Utc.with_ymd_and_hms(2021, 5, 4, 3, 2, 1).unwrap(),
        }
    }

    #[test]
    fn appends_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("records.jsonl");
        let mut s = RecordStore::open(&p).unwrap();
        assert!(s.is_empty());
        s.append(&[rec("p1", "a"), rec("p2", "a")]).unwrap();
        s.append(&[rec("p1", "b")]).unwrap();
        let again = RecordStore::open(&p).unwrap();
        assert_eq!(again.records(), s.records());
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 3);
    }
}
