use std::collections::HashMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use vte_core::corpus::{CorpusSplit, Instance, SplitName};
use vte_core::qc::{assemble_batch, check_trusted, record_line, validate_submission, Batch, Submission, TrustedPair, BATCH_SIZE};
use vte_core::text::tokenize;
use vte_core::Error;

use crate::error::{ItemFailures, ServiceError, ServiceResult};
use crate::ledger::{AssignmentLedger, Reservation};
use crate::store::RecordStore;
use crate::workers::WorkerRegistry;

pub const DEFAULT_APPROVAL_THRESHOLD: f64 = 0.90;
pub const DEFAULT_RESERVATION_MINUTES: i64 = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub approval_threshold: f64,
    pub reservation_timeout: Duration,
    /// Base seed; each issued batch derives its own from it.
    pub seed: u64,
    /// Prefix joined with `image_id` to form item image URLs.
    pub image_url_prefix: String,
    pub image_extension: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            approval_threshold: DEFAULT_APPROVAL_THRESHOLD,
            reservation_timeout: Duration::minutes(DEFAULT_RESERVATION_MINUTES),
            seed: 0,
            image_url_prefix: "/images/".into(),
            image_extension: "jpg".into(),
        }
    }
}

/// One item as shown to a worker. Labels and the trusted position are never
/// part of the payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub pair_id: String,
    pub image_url: String,
    pub hypothesis: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPayload {
    pub batch_id: String,
    pub expires_at: DateTime<Utc>,
    pub items: Vec<BatchItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub worker_id: String,
    pub batch_id: String,
    pub submissions: Vec<Submission>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accepted {
    pub batch_id: String,
    pub stored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BatchState {
    Open,
    Closed,
    Expired,
}

#[derive(Debug, Clone)]
struct IssuedBatch {
    batch: Batch,
    worker_id: String,
    expires_at: DateTime<Utc>,
    state: BatchState,
}

/// The annotation workflow behind the HTTP API. Every method takes the
/// current time so behaviour is reproducible in tests.
#[derive(Debug)]
pub struct AnnotationService {
    config: ServiceConfig,
    queue: Vec<String>,
    tasks: HashMap<String, (SplitName, Instance)>,
    trusted: Vec<TrustedPair>,
    trusted_instances: HashMap<String, Instance>,
    workers: WorkerRegistry,
    store: RecordStore,
    ledger: AssignmentLedger,
    batches: HashMap<String, IssuedBatch>,
    issued: u64,
}

impl AnnotationService {
    /// `queue` lists the splits whose instances are to be annotated, in
    /// issue order. Existing store records count toward each pair's three
    /// annotations.
    pub fn new(
        config: ServiceConfig,
        queue: &[CorpusSplit],
        trusted: Vec<TrustedPair>,
        workers: WorkerRegistry,
        store: RecordStore,
    ) -> vte_core::Result<Self> {
        if !(0.0..=1.0).contains(&config.approval_threshold) {
            return Err(Error::Configuration(format!(
                "approval threshold {} outside [0, 1]",
                config.approval_threshold
            )));
        }
        if config.reservation_timeout <= Duration::zero() {
            return Err(Error::Configuration("reservation timeout must be positive".into()));
        }
        if trusted.is_empty() {
            return Err(Error::Configuration("trusted pool is empty".into()));
        }
        let mut tasks = HashMap::new();
        let mut order = Vec::new();
        for split in queue {
            for inst in split.instances() {
                if tasks.insert(inst.pair_id.clone(), (split.name, inst.clone())).is_some() {
                    return Err(Error::Integrity(format!("pair {} queued twice", inst.pair_id)));
                }
                order.push(inst.pair_id.clone());
            }
        }
        let mut trusted_instances = HashMap::new();
        for t in &trusted {
            if tasks.contains_key(&t.instance.pair_id) {
                return Err(Error::Integrity(format!(
                    "trusted pair {} is also queued for annotation",
                    t.instance.pair_id
                )));
            }
            trusted_instances.insert(t.instance.pair_id.clone(), t.instance.clone());
        }
        let ledger = AssignmentLedger::from_records(store.records())?;
        Ok(AnnotationService {
            config,
            queue: order,
            tasks,
            trusted,
            trusted_instances,
            workers,
            store,
            ledger,
            batches: HashMap::new(),
            issued: 0,
        })
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn ledger(&self) -> &AssignmentLedger {
        &self.ledger
    }

    fn authorize(&self, worker_id: &str) -> ServiceResult<()> {
        let w = self
            .workers
            .get(worker_id)
            .ok_or_else(|| ServiceError::UnknownWorker(worker_id.to_string()))?;
        if w.approval_rate < self.config.approval_threshold {
            return Err(ServiceError::Unauthorized {
                worker_id: worker_id.to_string(),
                approval_rate: w.approval_rate,
                threshold: self.config.approval_threshold,
            });
        }
        Ok(())
    }

    fn expire(&mut self, now: DateTime<Utc>) {
        for b in self.ledger.expire(now) {
            if let Some(issued) = self.batches.get_mut(&b) {
                issued.state = BatchState::Expired;
                log::info!("batch {b} of {} expired", issued.worker_id);
            }
        }
    }

    fn instance(&self, pair_id: &str) -> Option<&Instance> {
        self.tasks
            .get(pair_id)
            .map(|(_, i)| i)
            .or_else(|| self.trusted_instances.get(pair_id))
    }

    /// Reserves nine eligible pairs for the worker and wraps them with a
    /// trusted pair into a batch.
    pub fn get_batch(&mut self, worker_id: &str, now: DateTime<Utc>) -> ServiceResult<BatchPayload> {
        self.authorize(worker_id)?;
        self.expire(now);
        let needed = BATCH_SIZE - 1;
        let eligible: Vec<String> = self
            .queue
            .iter()
            .filter(|p| self.ledger.is_eligible(p, worker_id))
            .take(needed)
            .cloned()
            .collect();
        if eligible.len() < needed {
            return Err(ServiceError::NoWork {
                needed,
                available: eligible.len(),
            });
        }

        let seed = self.config.seed ^ self.issued.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        self.issued += 1;
        let batch = assemble_batch(&eligible, &self.trusted, seed)?;
        let expires_at = now + self.config.reservation_timeout;
        self.ledger.reserve(
            &batch.batch_id,
            Reservation {
                worker_id: worker_id.to_string(),
                pairs: eligible,
                expires_at,
            },
        )?;

        let items = batch
            .items
            .iter()
            .map(|p| {
                let inst = self.instance(p).expect("batch items come from known instances");
                BatchItem {
                    pair_id: p.clone(),
                    image_url: format!("{}{}.{}", self.config.image_url_prefix, inst.image_id, self.config.image_extension),
                    hypothesis: inst.hypothesis.clone(),
                    tokens: tokenize(&inst.hypothesis),
                }
            })
            .collect();
        let payload = BatchPayload {
            batch_id: batch.batch_id.clone(),
            expires_at,
            items,
        };
        self.batches.insert(
            batch.batch_id.clone(),
            IssuedBatch {
                batch,
                worker_id: worker_id.to_string(),
                expires_at,
                state: BatchState::Open,
            },
        );
        Ok(payload)
    }

    /// Validates all ten submissions, then applies the trusted-pair gate.
    /// Only a fully successful submission touches the store; a failed one
    /// leaves the batch open for another attempt.
    pub fn submit(&mut self, request: &SubmitRequest, now: DateTime<Utc>) -> ServiceResult<Accepted> {
        self.authorize(&request.worker_id)?;
        self.expire(now);
        let issued = match self.batches.get(&request.batch_id) {
            Some(b) if b.worker_id == request.worker_id => b,
            _ => return Err(ServiceError::NotFound(format!("no batch {} for this worker", request.batch_id))),
        };
        match issued.state {
            BatchState::Closed => return Err(ServiceError::Conflict(format!("batch {} was already accepted", request.batch_id))),
            BatchState::Expired => return Err(ServiceError::Conflict(format!("batch {} has expired", request.batch_id))),
            BatchState::Open => {}
        }
        debug_assert!(issued.expires_at > now);
        let batch = &issued.batch;
        if request.submissions.len() != batch.items.len() {
            return Err(ServiceError::BadRequest(format!(
                "expected {} submissions, got {}",
                batch.items.len(),
                request.submissions.len()
            )));
        }

        let mut failed = Vec::new();
        for (index, (sub, pair)) in request.submissions.iter().zip(&batch.items).enumerate() {
            if &sub.pair_id != pair {
                return Err(ServiceError::BadRequest(format!("submission {index} is for {} but item {index} is {pair}", sub.pair_id)));
            }
            let inst = self.instance(pair).expect("batch items come from known instances");
            let verdict = validate_submission(inst, sub).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            if !verdict.ok {
                failed.push(ItemFailures {
                    index,
                    pair_id: pair.clone(),
                    failures: verdict.failures,
                });
            }
        }
        if !failed.is_empty() {
            return Err(ServiceError::Validation(failed));
        }
        if !check_trusted(batch, &request.submissions)? {
            log::info!("batch {} of {} failed the quality gate", request.batch_id, request.worker_id);
            return Err(ServiceError::QualityCheckFailed);
        }

        let records = request
            .submissions
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != batch.trusted_position)
            .map(|(_, s)| s.clone().into_record(&request.worker_id, now))
            .collect::<vte_core::Result<Vec<_>>>()?;
        for r in &records {
            if self.ledger.completed(&r.pair_id) >= vte_core::qc::ANNOTATIONS_PER_PAIR {
                return Err(ServiceError::Conflict(format!("pair {} already has three annotations", r.pair_id)));
            }
        }
        self.store.append(&records)?;
        self.ledger.complete(&request.batch_id)?;
        self.batches.get_mut(&request.batch_id).expect("looked up above").state = BatchState::Closed;
        Ok(Accepted {
            batch_id: request.batch_id.clone(),
            stored: records.len(),
        })
    }

    /// Stored records in the annotation record line format, optionally
    /// restricted to pairs of one split.
    pub fn export(&self, split: Option<SplitName>) -> String {
        self.store
            .records()
            .iter()
            .filter(|r| split.is_none_or(|s| self.tasks.get(&r.pair_id).is_some_and(|(name, _)| *name == s)))
            .map(record_line)
            .collect()
    }
}
