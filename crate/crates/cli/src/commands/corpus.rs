use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use vte_core::corpus::{attach_explanations, compute_stats, load_split, merge_corrections, CorpusSplit, Label, SplitName};
use vte_core::features::{write_feature_store, EmbeddingTable, RegionFeatureMatrix};
use vte_core::qc::{aggregate_all, load_records, redistribution_report, worker_report, Decision, RedistributionReport, WorkerReport};
use vte_core::synthetic::{entailment_corpus, hypothesis_vocabulary, with_explanations};
use vte_core::Error;

use super::{create_parent, write_json};
use crate::args::{AggregateArgs, BuildCorpusArgs, StatsArgs};
use crate::error::{CliError, CliResult};

#[derive(Deserialize)]
struct ExplanationLine {
    pair_id: String,
    explanations: Vec<String>,
}

fn load_explanations(path: &Path) -> CliResult<BTreeMap<String, Vec<String>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ExplanationLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.entry(row.pair_id).or_default().extend(row.explanations);
    }
    Ok(out)
}

fn write_ids(path: &Path, ids: &[String]) -> CliResult<()> {
    create_parent(path)?;
    let text: String = ids.iter().map(|id| format!("{id}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

/// Aggregates `records`, merges the outcomes into `base` and returns the
/// merged split with the ids of pairs dropped as ambiguous.
fn correct(base: &CorpusSplit, records: &Path) -> CliResult<(CorpusSplit, RedistributionReport, WorkerReport, Vec<String>)> {
    let records = load_records(records)?;
    let outcomes = aggregate_all(&records)?;
    let merged = merge_corrections(base, &outcomes)?;
    let report = redistribution_report(&outcomes, Label::Neutral)?;
    let ambiguous = outcomes
        .iter()
        .filter(|o| o.decision == Decision::Ambiguous)
        .map(|o| o.pair_id.clone())
        .collect();
    Ok((merged, report, worker_report(&records), ambiguous))
}

pub fn build_corpus(a: BuildCorpusArgs) -> CliResult<()> {
    if a.synthetic {
        return synthetic_corpus(&a);
    }
    let (Some(split_path), Some(out)) = (&a.split, &a.out) else {
        return Err(CliError::Usage("--split and --out are required without --synthetic".into()));
    };
    let mut split = load_split(split_path, a.name)?;
    if let Some(records) = &a.records {
        let (merged, report, _, ambiguous) = correct(&split, records)?;
        print!("{}", report.to_table());
        if let Some(path) = &a.ambiguous_out {
            write_ids(path, &ambiguous)?;
        }
        split = merged;
    } else if a.ambiguous_out.is_some() {
        return Err(CliError::Usage("--ambiguous-out needs --records".into()));
    }
    if let Some(path) = &a.explanations {
        let source = load_explanations(path)?;
        let (attached, report) = attach_explanations(&split, &source)?;
        for (what, ids) in [
            ("unknown pairs", &report.unknown_pairs),
            ("truncated pairs", &report.truncated_pairs),
            ("corrected pairs left untouched", &report.skipped_corrected),
        ] {
            if !ids.is_empty() {
                log::warn!("{} {what} in {}", ids.len(), path.display());
            }
        }
        split = attached;
    }
    create_parent(out)?;
    split.save(out)?;
    println!("wrote {} instances to {}", split.len(), out.display());
    Ok(())
}

fn synthetic_corpus(a: &BuildCorpusArgs) -> CliResult<()> {
    let dir = a.out_dir.as_ref().expect("clap requires --out-dir with --synthetic");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut matrices: Vec<RegionFeatureMatrix> = Vec::new();
    for (i, (name, n)) in [
        (SplitName::Train, a.n_train),
        (SplitName::Validation, a.n_validation),
        (SplitName::Test, a.n_test),
    ]
    .into_iter()
    .enumerate()
    {
        let seed = a.seed.wrapping_add(i as u64);
        let vte = entailment_corpus(name, n, a.regions, a.dim, seed)?;
        // Generated ids restart in every split; prefix them so one feature
        // store can serve all three.
        let mut instances = vte.split.into_instances();
        for inst in &mut instances {
            inst.pair_id = format!("{name}-{}", inst.pair_id);
            inst.image_id = format!("{name}-{}", inst.image_id);
        }
        for mut m in vte.features {
            m.image_id = format!("{name}-{}", m.image_id);
            matrices.push(m);
        }
        let split = with_explanations(&CorpusSplit::new(name, instances)?, seed)?;
        let path = dir.join(format!("{name}.jsonl"));
        split.save(&path)?;
        println!("wrote {} instances to {}", split.len(), path.display());
    }
    let manifest = write_feature_store(dir.join("features"), &matrices)?;
    println!("wrote {} feature matrices, manifest {}", matrices.len(), manifest.display());

    let table = EmbeddingTable::random(hypothesis_vocabulary(), a.embed_dim, a.seed)?;
    let path = dir.join("embeddings.txt");
    let mut text = String::new();
    for token in table.tokens() {
        text.push_str(token);
        for v in table.lookup(token) {
            text.push_str(&format!(" {v}"));
        }
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("wrote {} embeddings to {}", table.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct AggregateReport<'a> {
    redistribution: &'a RedistributionReport,
    workers: &'a WorkerReport,
    ambiguous: &'a [String],
}

pub fn aggregate(a: AggregateArgs) -> CliResult<()> {
    let base = load_split(&a.base, a.name)?;
    let (merged, report, workers, ambiguous) = correct(&base, &a.records)?;
    print!("{}", report.to_table());
    print!("{}", workers.to_table());
    create_parent(&a.out)?;
    merged.save(&a.out)?;
    println!("wrote {} instances to {} ({} ambiguous dropped)", merged.len(), a.out.display(), ambiguous.len());
    if let Some(path) = &a.ambiguous_out {
        write_ids(path, &ambiguous)?;
    }
    if let Some(path) = &a.report {
        create_parent(path)?;
        write_json(
            path,
            &AggregateReport {
                redistribution: &report,
                workers: &workers,
                ambiguous: &ambiguous,
            },
        )?;
    }
    Ok(())
}

pub fn stats(a: StatsArgs) -> CliResult<()> {
    let split = load_split(&a.split, a.name)?;
    let stats = compute_stats(&split);
    print!("{}", stats.to_table());
    if let Some(path) = &a.json {
        create_parent(path)?;
        write_json(path, &stats)?;
    }
    Ok(())
}
