use std::path::Path;

use chrono::Duration;

use vte_core::corpus::{load_split, CorpusSplit, Label, Source, SplitName};
use vte_core::qc::TrustedPair;
use vte_service::{serve as serve_http, AnnotationService, AppState, RecordStore, ServiceConfig, WorkerRegistry};

use crate::args::ServeArgs;
use crate::error::{CliError, CliResult};

/// Only original neutral pairs are re-annotated.
fn neutral_originals(spec: &str) -> CliResult<CorpusSplit> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--queue expects name=path, got {spec:?}")))?;
    let name: SplitName = name.parse().map_err(|e: vte_core::Error| CliError::Usage(e.to_string()))?;
    let split = load_split(Path::new(path), name)?;
    let keep = split
        .into_instances()
        .into_iter()
        .filter(|i| i.label == Label::Neutral && i.source == Source::Original)
        .collect();
    Ok(CorpusSplit::new(name, keep)?)
}

pub fn serve(a: ServeArgs) -> CliResult<()> {
    let queue = a.queue.iter().map(|s| neutral_originals(s)).collect::<CliResult<Vec<_>>>()?;
    let trusted = load_split(&a.trusted, SplitName::Validation)?
        .into_instances()
        .into_iter()
        .map(TrustedPair::from_instance)
        .collect();
    if a.reservation_minutes <= 0 {
        return Err(CliError::Usage("--reservation-minutes must be positive".into()));
    }
    let config = ServiceConfig {
        approval_threshold: a.approval_threshold,
        reservation_timeout: Duration::minutes(a.reservation_minutes),
        seed: a.seed,
        ..ServiceConfig::default()
    };
    let workers = WorkerRegistry::load(&a.workers)?;
    let store = RecordStore::open(&a.store)?;
    let service = AnnotationService::new(config, &queue, trusted, workers, store)?;
    log::info!(
        "{} pairs queued from {} splits",
        queue.iter().map(CorpusSplit::len).sum::<usize>(),
        queue.len()
    );
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime
        .block_on(serve_http(a.addr, AppState::new(service, a.images)))
        .map_err(|e| CliError::Runtime(format!("server on {}: {e}", a.addr)))
}
