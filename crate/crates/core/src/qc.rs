//! Crowd-annotation quality control.
//!
//! Everything here is a pure function of its inputs (plus an explicit seed):
//! batch assembly with one hidden trusted pair, the per-item submission
//! rules, the trusted-pair gate, three-way label aggregation, and the
//! reports used to audit a collection round.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Instance, Label};
use crate::text::{normalize_token, normalized_words, tokenize};
use crate::{Error, Result};

/// Items shown to a worker per batch, trusted pair included.
pub const BATCH_SIZE: usize = 10;
/// Annotations collected per re-annotated pair.
pub const ANNOTATIONS_PER_PAIR: usize = 3;

/// One worker's persisted annotation of one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub worker_id: String,
    pub label: Label,
    pub highlighted: BTreeSet<usize>,
    pub explanation: String,
    pub timestamp: DateTime<Utc>,
}

/// A raw submission for one batch item, before validation. The label is
/// optional because the client may omit it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub pair_id: String,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub highlighted: BTreeSet<usize>,
    #[serde(default)]
    pub explanation: String,
}

impl Submission {
    /// Converts a validated submission into a record.
    pub fn into_record(self, worker_id: &str, timestamp: DateTime<Utc>) -> Result<AnnotationRecord> {
        let label = self
            .label
            .ok_or_else(|| Error::Integrity(format!("submission for {} has no label", self.pair_id)))?;
        Ok(AnnotationRecord {
            pair_id: self.pair_id,
            worker_id: worker_id.to_string(),
            label,
            highlighted: self.highlighted,
            explanation: self.explanation,
            timestamp,
        })
    }
}

impl From<&AnnotationRecord> for Submission {
    fn from(r: &AnnotationRecord) -> Self {
        Submission {
            pair_id: r.pair_id.clone(),
            label: Some(r.label),
            highlighted: r.highlighted.clone(),
            explanation: r.explanation.clone(),
        }
    }
}

/// An instance whose label is known with confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustedPair {
    pub instance: Instance,
    pub gold_label: Label,
}

impl TrustedPair {
    pub fn new(instance: Instance, gold_label: Label) -> Result<Self> {
        if instance.label != gold_label {
            return Err(Error::Integrity(format!(
                "trusted pair {} has label {} but gold {}",
                instance.pair_id, instance.label, gold_label
            )));
        }
        Ok(TrustedPair { instance, gold_label })
    }

    pub fn from_instance(instance: Instance) -> Self {
        let gold_label = instance.label;
        TrustedPair { instance, gold_label }
    }
}

/// Ten items for one worker, one of which is a trusted pair.
///
/// `trusted_position` and `trusted_gold` are server-side only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: String,
    pub items: Vec<String>,
    pub trusted_position: usize,
    pub trusted_gold: Label,
    pub seed: u64,
}

impl Batch {
    pub fn trusted_pair_id(&self) -> &str {
        &self.items[self.trusted_position]
    }
}

/// Builds a batch from the first nine queue items plus one trusted pair
/// inserted at a seeded uniform position.
pub fn assemble_batch(queue: &[String], trusted_pool: &[TrustedPair], seed: u64) -> Result<Batch> {
    let needed = BATCH_SIZE - 1;
    if queue.len() < needed {
        return Err(Error::InsufficientWork {
            needed,
            available: queue.len(),
        });
    }
    if trusted_pool.is_empty() {
        return Err(Error::Configuration("trusted pool is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trusted_position = rng.random_range(0..BATCH_SIZE);
    let trusted = &trusted_pool[rng.random_range(0..trusted_pool.len())];

    let mut items: Vec<String> = queue[..needed].to_vec();
    items.insert(trusted_position, trusted.instance.pair_id.clone());

    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for item in &items {
        hasher.update(item.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let batch_id = format!("b-{}", hex::encode(&digest[..8]));

    Ok(Batch {
        batch_id,
        items,
        trusted_position,
        trusted_gold: trusted.gold_label,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidationFailure {
    NoLabel,
    NoHighlight,
    TooFewHighlightedUsed,
    HypothesisCopy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub ok: bool,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationResult {
    fn from_failures(failures: Vec<ValidationFailure>) -> Self {
        ValidationResult {
            ok: failures.is_empty(),
            failures,
        }
    }
}

/// Applies the per-item submission rules.
///
/// A highlighted token counts as used when its normalized form occurs among
/// the normalized explanation words; at least half of the highlighted
/// tokens must be used (`2 * used >= highlighted`).
pub fn validate_submission(instance: &Instance, submission: &Submission) -> Result<ValidationResult> {
    if submission.pair_id != instance.pair_id {
        return Err(Error::Integrity(format!(
            "submission for {} checked against instance {}",
            submission.pair_id, instance.pair_id
        )));
    }
    let hyp_tokens = tokenize(&instance.hypothesis);
    if let Some(&bad) = submission.highlighted.iter().find(|&&i| i >= hyp_tokens.len()) {
        return Err(Error::Integrity(format!(
            "highlight index {bad} out of range for {}-token hypothesis of {}",
            hyp_tokens.len(),
            instance.pair_id
        )));
    }

    let mut failures = Vec::new();
    if submission.label.is_none() {
        failures.push(ValidationFailure::NoLabel);
    }
    if submission.highlighted.is_empty() {
        failures.push(ValidationFailure::NoHighlight);
    }

    let expl_words = normalized_words(&submission.explanation);
    let expl_set: HashSet<&str> = expl_words.iter().map(String::as_str).collect();
    let used = submission
        .highlighted
        .iter()
        .filter(|&&i| normalize_token(&hyp_tokens[i]).is_some_and(|w| expl_set.contains(w.as_str())))
        .count();
    if 2 * used < submission.highlighted.len() {
        failures.push(ValidationFailure::TooFewHighlightedUsed);
    }

    if expl_words == normalized_words(&instance.hypothesis) {
        failures.push(ValidationFailure::HypothesisCopy);
    }

    Ok(ValidationResult::from_failures(failures))
}

/// True iff the submission at the hidden position carries the gold label.
pub fn check_trusted(batch: &Batch, submissions: &[Submission]) -> Result<bool> {
    if submissions.len() != batch.items.len() {
        return Err(Error::Integrity(format!(
            "{} submissions for a {}-item batch",
            submissions.len(),
            batch.items.len()
        )));
    }
    for (i, (sub, item)) in submissions.iter().zip(&batch.items).enumerate() {
        if &sub.pair_id != item {
            return Err(Error::Integrity(format!(
                "submission {i} is for {} but batch item {i} is {item}",
                sub.pair_id
            )));
        }
    }
    Ok(submissions[batch.trusted_position].label == Some(batch.trusted_gold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decision {
    Majority { label: Label, agreement: u8 },
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationOutcome {
    pub pair_id: String,
    pub decision: Decision,
    /// Explanations of the agreeing workers, ordered by worker id.
    pub majority_explanations: Vec<String>,
}

/// Combines exactly three annotations of one pair.
pub fn aggregate(pair_id: &str, records: &[AnnotationRecord]) -> Result<AggregationOutcome> {
    if records.len() != ANNOTATIONS_PER_PAIR {
        return Err(Error::Arity {
            expected: ANNOTATIONS_PER_PAIR,
            got: records.len(),
        });
    }
    let mut workers = HashSet::new();
    for r in records {
        if r.pair_id != pair_id {
            return Err(Error::Integrity(format!(
                "record for {} aggregated under {pair_id}",
                r.pair_id
            )));
        }
        if !workers.insert(r.worker_id.as_str()) {
            return Err(Error::Integrity(format!(
                "worker {} annotated {pair_id} more than once",
                r.worker_id
            )));
        }
    }

    let mut counts = [0u8; 3];
    for r in records {
        counts[r.label.index()] += 1;
    }
    let winner = Label::ALL.into_iter().find(|l| counts[l.index()] >= 2);

    Ok(match winner {
        None => AggregationOutcome {
            pair_id: pair_id.to_string(),
            decision: Decision::Ambiguous,
            majority_explanations: Vec::new(),
        },
        Some(label) => {
            let mut agreeing: Vec<&AnnotationRecord> = records.iter().filter(|r| r.label == label).collect();
            agreeing.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
            AggregationOutcome {
                pair_id: pair_id.to_string(),
                decision: Decision::Majority {
                    label,
                    agreement: counts[label.index()],
                },
                majority_explanations: agreeing.iter().map(|r| r.explanation.clone()).collect(),
            }
        }
    })
}

/// Groups records by pair and aggregates each group, in first-seen pair
/// order.
pub fn aggregate_all(records: &[AnnotationRecord]) -> Result<Vec<AggregationOutcome>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        let group = groups.entry(r.pair_id.as_str()).or_default();
        if group.is_empty() {
            order.push(r.pair_id.as_str());
        }
        group.push(r.clone());
    }
    order.into_iter().map(|p| aggregate(p, &groups[p])).collect()
}

/// How re-annotated pairs were redistributed across labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RedistributionReport {
    pub original_label: Label,
    pub n_outcomes: usize,
    pub majority_counts: BTreeMap<Label, usize>,
    pub n_ambiguous: usize,
}

impl RedistributionReport {
    /// Share of all outcomes that ended in a `label` majority. Together with
    /// [`Self::ambiguous_fraction`] these sum to exactly one.
    pub fn majority_fraction(&self, label: Label) -> Ratio<usize> {
        Ratio::new(self.majority_counts[&label], self.n_outcomes)
    }

    pub fn ambiguous_fraction(&self) -> Ratio<usize> {
        Ratio::new(self.n_ambiguous, self.n_outcomes)
    }

    /// Label distribution among retained (non-ambiguous) pairs, i.e. the
    /// class distribution the corrected pairs contribute to the split.
    pub fn retained_fraction(&self, label: Label) -> Option<Ratio<usize>> {
        let retained = self.n_outcomes - self.n_ambiguous;
        (retained > 0).then(|| Ratio::new(self.majority_counts[&label], retained))
    }

    /// Class distribution of a corrected split, given the per-label counts of
    /// the instances that were not re-annotated.
    pub fn implied_split_distribution(&self, untouched: &BTreeMap<Label, usize>) -> Option<BTreeMap<Label, Ratio<usize>>> {
        let total: usize = Label::ALL
            .iter()
            .map(|l| untouched.get(l).copied().unwrap_or(0) + self.majority_counts[l])
            .sum();
        (total > 0).then(|| {
            Label::ALL
                .iter()
                .map(|&l| {
                    let n = untouched.get(&l).copied().unwrap_or(0) + self.majority_counts[&l];
                    (l, Ratio::new(n, total))
                })
                .collect()
        })
    }

    pub fn to_table(&self) -> String {
        let pct = |r: Ratio<usize>| 100.0 * (*r.numer() as f64) / (*r.denom() as f64);
        let mut s = format!(
            "originally {} pairs re-annotated: {}\n{:<16}{:>8}{:>12}{:>12}\n",
            self.original_label, self.n_outcomes, "outcome", "count", "% all", "% retained"
        );
        for l in Label::ALL {
            let retained = self.retained_fraction(l).map(pct).unwrap_or(0.0);
            s.push_str(&format!(
                "{:<16}{:>8}{:>11.2}%{:>11.2}%\n",
                l.as_str(),
                self.majority_counts[&l],
                pct(self.majority_fraction(l)),
                retained
            ));
        }
        s.push_str(&format!(
            "{:<16}{:>8}{:>11.2}%\n",
            "ambiguous",
            self.n_ambiguous,
            pct(self.ambiguous_fraction())
        ));
        s
    }
}

pub fn redistribution_report(outcomes: &[AggregationOutcome], original_label: Label) -> Result<RedistributionReport> {
    if outcomes.is_empty() {
        return Err(Error::Argument("redistribution report needs at least one outcome".into()));
    }
    let mut majority_counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    let mut n_ambiguous = 0;
    for o in outcomes {
        match o.decision {
            Decision::Majority { label, .. } => *majority_counts.get_mut(&label).unwrap() += 1,
            Decision::Ambiguous => n_ambiguous += 1,
        }
    }
    Ok(RedistributionReport {
        original_label,
        n_outcomes: outcomes.len(),
        majority_counts,
        n_ambiguous,
    })
}

/// Fraction of `(corrected, gold)` pairs that disagree.
pub fn estimate_error_rate(sample: &[(Label, Label)]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Argument("error-rate sample is empty".into()));
    }
    let mismatches = sample.iter().filter(|(c, g)| c != g).count();
    Ok(mismatches as f64 / sample.len() as f64)
}

/// Worker participation summary. Each record counts as one assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkerReport {
    pub n_workers: usize,
    pub mean_assignments: Option<f64>,
    /// Population standard deviation.
    pub std_assignments: Option<f64>,
}

impl WorkerReport {
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        format!(
            "workers             {}\nmean assignments    {}\nstd assignments     {}\n",
            self.n_workers,
            fmt(self.mean_assignments),
            fmt(self.std_assignments)
        )
    }
}

pub fn worker_report(records: &[AnnotationRecord]) -> WorkerReport {
    let mut per_worker: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *per_worker.entry(r.worker_id.as_str()).or_default() += 1;
    }
    let n = per_worker.len();
    if n == 0 {
        return WorkerReport {
            n_workers: 0,
            mean_assignments: None,
            std_assignments: None,
        };
    }
    let mean = per_worker.values().sum::<usize>() as f64 / n as f64;
    let var = per_worker
        .values()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    WorkerReport {
        n_workers: n,
        mean_assignments: Some(mean),
        std_assignments: Some(var.sqrt()),
    }
}

/// Reads an annotation record file (one JSON record per line).
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut out: W, records: &[AnnotationRecord]) -> std::io::Result<()> {
    for r in records {
        out.write_all(record_line(r).as_bytes())?;
    }
    Ok(())
}

/// One serialized record, newline included.
pub fn record_line(record: &AnnotationRecord) -> String {
    let mut line = serde_json::to_string(record).expect("annotation records always serialize");
    line.push('\n');
    line
}
