//! Live annotation service.
//!
//! Workers fetch ten-item batches (nine queued pairs plus one hidden trusted
//! pair), submit a label, highlighted hypothesis tokens and an explanation
//! for each item, and are accepted only when every item passes validation
//! and the trusted pair carries its gold label. Accepted records go to an
//! append-only JSON-lines log; each pair receives at most three annotations
//! from distinct workers.
//!
//! - [`AnnotationService`] holds the workflow and takes explicit timestamps.
//! - [`router`] exposes it over HTTP: `GET /api/batch`, `POST /api/submit`,
//!   `GET /api/export` and `GET /images/{name}`.

mod error;
mod http;
mod ledger;
mod service;
mod store;
mod workers;

pub use error::{ItemFailures, ServiceError, ServiceResult};
pub use http::{router, serve, AppState};
pub use ledger::{AssignmentLedger, Reservation};
pub use service::{
    Accepted, AnnotationService, BatchItem, BatchPayload, ServiceConfig, SubmitRequest, DEFAULT_APPROVAL_THRESHOLD,
    DEFAULT_RESERVATION_MINUTES,
};
pub use store::RecordStore;
pub use workers::{Worker, WorkerRegistry};
