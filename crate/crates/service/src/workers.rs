use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vte_core::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    pub worker_id: String,
    pub approval_rate: f64,
}

impl Worker {
    pub fn new(worker_id: impl Into<String>, approval_rate: f64) -> vte_core::Result<Self> {
        let worker_id = worker_id.into();
        if !(0.0..=1.0).contains(&approval_rate) {
            return Err(Error::Argument(format!(
                "approval rate of {worker_id} must lie in [0, 1], got {approval_rate}"
            )));
        }
        Ok(Worker { worker_id, approval_rate })
    }
}

/// Known workers and their approval rates.
#[derive(Debug, Clone, Default)]
pub struct WorkerRegistry {
    workers: HashMap<String, Worker>,
}

impl WorkerRegistry {
    pub fn new(workers: impl IntoIterator<Item = Worker>) -> vte_core::Result<Self> {
        let mut reg = WorkerRegistry::default();
        for w in workers {
            let w = Worker::new(w.worker_id, w.approval_rate)?;
            if reg.workers.contains_key(&w.worker_id) {
                return Err(Error::Integrity(format!("worker {} listed twice", w.worker_id)));
            }
            reg.workers.insert(w.worker_id.clone(), w);
        }
        Ok(reg)
    }

    /// Reads one `{"worker_id": …, "approval_rate": …}` record per line.
    pub fn load(path: impl AsRef<Path>) -> vte_core::Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut workers = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            workers.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        WorkerRegistry::new(workers)
    }

    pub fn get(&self, worker_id: &str) -> Option<&Worker> {
        self.workers.get(worker_id)
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }
}
