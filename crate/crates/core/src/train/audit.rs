use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, Label};
use crate::explainer::GeneratedExplanation;
use crate::{Error, Result};

const SHEET_HEADER: &str = "pair_id\timage_id\thypothesis\tgold_label\texplanation\tk\tn";

/// `k` of `n` required attributes present in an explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceScore {
    pub k: u32,
    pub n: u32,
}

impl RelevanceScore {
    pub fn new(k: u32, n: u32) -> Result<Self> {
        if n == 0 || k > n {
            return Err(Error::Argument(format!("relevance score needs 0 <= k <= n and n >= 1, got {k}/{n}")));
        }
        Ok(RelevanceScore { k, n })
    }

    pub fn score(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn fully_relevant(&self) -> bool {
        self.k == self.n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub pair_id: String,
    pub image_id: String,
    pub hypothesis: String,
    pub gold_label: Label,
    pub explanation: String,
    pub score: Option<RelevanceScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditSample {
    pub rows: Vec<AuditRow>,
    /// Set when fewer correct predictions exist than were requested.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub n_scored: usize,
    pub mean_score: f64,
    pub fully_relevant_fraction: f64,
}

/// Uniformly samples `sample_size` correctly predicted instances into an
/// unscored review sheet. Rows keep the generated file's order.
pub fn relevance_audit(generated: &[GeneratedExplanation], gold: &CorpusSplit, sample_size: usize, seed: u64) -> Result<AuditSample> {
    let mut correct = Vec::new();
    for g in generated {
        let inst = gold
            .get(&g.pair_id)
            .ok_or_else(|| Error::Data(format!("generated pair {} is not in the gold split", g.pair_id)))?;
        if inst.label == g.predicted_label {
            correct.push((g, inst));
        }
    }
    let mut warning = None;
    let chosen: Vec<usize> = if correct.len() < sample_size {
        let msg = format!(
            "only {} correct predictions available; sample reduced from {sample_size}",
            correct.len()
        );
        log::warn!("{msg}");
        warning = Some(msg);
        (0..correct.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, correct.len(), sample_size).into_vec();
        idx.sort_unstable();
        idx
    };
    let rows = chosen
        .into_iter()
        .map(|i| {
            let (g, inst) = correct[i];
            AuditRow {
                pair_id: g.pair_id.clone(),
                image_id: inst.image_id.clone(),
                hypothesis: inst.hypothesis.clone(),
                gold_label: inst.label,
                explanation: g.explanation.clone(),
                score: None,
            }
        })
        .collect();
    Ok(AuditSample { rows, warning })
}

fn clean(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

/// Tab-separated sheet with empty `k` and `n` columns for the reviewer.
pub fn write_audit_sheet(path: impl AsRef<Path>, rows: &[AuditRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{SHEET_HEADER}\n");
    for r in rows {
        let (k, n) = r.score.map_or((String::new(), String::new()), |s| (s.k.to_string(), s.n.to_string()));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{k}\t{n}\n",
            clean(&r.pair_id),
            clean(&r.image_id),
            clean(&r.hypothesis),
            r.gold_label,
            clean(&r.explanation)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_audit_sheet(path: impl AsRef<Path>) -> Result<Vec<AuditRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 tab-separated fields, found {}", f.len())));
        }
        let score = match (f[5].trim(), f[6].trim()) {
            ("", "") => None,
            (k, m) => {
                let k = k.parse().map_err(|_| err(format!("bad k {k:?}")))?;
                let m = m.parse().map_err(|_| err(format!("bad n {m:?}")))?;
                Some(RelevanceScore::new(k, m).map_err(|e| err(e.to_string()))?)
            }
        };
        rows.push(AuditRow {
            pair_id: f[0].to_string(),
            image_id: f[1].to_string(),
            hypothesis: f[2].to_string(),
            gold_label: f[3].parse().map_err(|e: Error| err(e.to_string()))?,
            explanation: f[4].to_string(),
            score,
        });
    }
    Ok(rows)
}

/// Mean `k/n` and fraction with `k = n` over a fully scored sheet.
pub fn aggregate_audit(rows: &[AuditRow]) -> Result<AuditSummary> {
    let mut scores = Vec::with_capacity(rows.len());
    for r in rows {
        scores.push(r.score.ok_or_else(|| Error::Data(format!("row {} has not been scored", r.pair_id)))?);
    }
    if scores.is_empty() {
        return Err(Error::Data("audit sheet has no rows".into()));
    }
    let n = scores.len() as f64;
    Ok(AuditSummary {
        n_scored: scores.len(),
        mean_score: scores.iter().map(RelevanceScore::score).sum::<f64>() / n,
        fully_relevant_fraction: scores.iter().filter(|s| s.fully_relevant()).count() as f64 / n,
    })
}
