//! VTE corpus records and split-level operations.
//!
//! A split is stored as one JSON record per line:
//!
//! ```text
//! {"pair_id":"p1","image_id":"img1","hypothesis":"A man plays.","label":"neutral","explanations":[],"source":"original"}
//! ```
//!
//! Record order is preserved on load and on write.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qc::{AggregationOutcome, Decision};
use crate::text::tokenize;
use crate::{Error, Result};

/// Maximum number of reference explanations carried by one instance.
pub const MAX_EXPLANATIONS: usize = 3;

/// Entailment relation between a premise image and a hypothesis.
///
/// The declaration order doubles as the prediction tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" | "e" => Ok(Label::Entailment),
            "neutral" | "n" => Ok(Label::Neutral),
            "contradiction" | "c" => Ok(Label::Contradiction),
            other => Err(Error::Argument(format!("unknown label {other:?}"))),
        }
    }
}

/// Whether an instance still carries its original label or was re-annotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Original,
    Corrected,
}

/// One premise-image / hypothesis pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub pair_id: String,
    pub image_id: String,
    pub hypothesis: String,
    pub label: Label,
    #[serde(default)]
    pub explanations: Vec<String>,
    #[serde(default)]
    pub source: Source,
}

impl Instance {
    pub fn new(
        pair_id: impl Into<String>,
        image_id: impl Into<String>,
        hypothesis: impl Into<String>,
        label: Label,
    ) -> Self {
        Instance {
            pair_id: pair_id.into(),
            image_id: image_id.into(),
            hypothesis: hypothesis.into(),
            label,
            explanations: Vec::new(),
            source: Source::Original,
        }
    }

    pub fn hypothesis_tokens(&self) -> Vec<String> {
        tokenize(&self.hypothesis)
    }

    fn check(&self) -> Result<()> {
        if self.pair_id.is_empty() {
            return Err(Error::Integrity("empty pair_id".into()));
        }
        if self.hypothesis_tokens().is_empty() {
            return Err(Error::Integrity(format!(
                "pair {} has an empty hypothesis",
                self.pair_id
            )));
        }
        if self.source == Source::Corrected && self.explanations.is_empty() {
            return Err(Error::Integrity(format!(
                "corrected pair {} carries no explanation",
                self.pair_id
            )));
        }
        if self.explanations.len() > MAX_EXPLANATIONS {
            return Err(Error::Integrity(format!(
                "pair {} carries {} explanations (max {MAX_EXPLANATIONS})",
                self.pair_id,
                self.explanations.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(SplitName::Train),
            "val" | "valid" | "validation" | "dev" => Ok(SplitName::Validation),
            "test" | "testing" => Ok(SplitName::Test),
            other => Err(Error::Argument(format!("unknown split name {other:?}"))),
        }
    }
}

/// An ordered, duplicate-free list of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub name: SplitName,
    instances: Vec<Instance>,
}

impl CorpusSplit {
    /// Builds a split, checking every instance and pair_id uniqueness.
    pub fn new(name: SplitName, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            inst.check()?;
            if !seen.insert(inst.pair_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate pair_id {:?} in {name} split",
                    inst.pair_id
                )));
            }
        }
        Ok(CorpusSplit { name, instances })
    }

    pub fn empty(name: SplitName) -> Self {
        CorpusSplit {
            name,
            instances: Vec::new(),
        }
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, pair_id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.pair_id == pair_id)
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }

    /// Serializes the split in record-per-line form.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut out, inst)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads a split file. Blank lines are skipped; line numbers in errors are
/// 1-based.
pub fn load_split(path: impl AsRef<Path>, name: SplitName) -> Result<CorpusSplit> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_split(BufReader::new(file), name, path)
}

pub fn read_split<R: BufRead>(reader: R, name: SplitName, origin: &Path) -> Result<CorpusSplit> {
    let mut instances = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        instances.push(inst);
    }
    CorpusSplit::new(name, instances)
}

/// Applies three-way aggregation outcomes to the neutral pairs they refer to.
///
/// Majority outcomes relabel the instance, mark it corrected and replace its
/// explanations with those of the agreeing workers. Ambiguous outcomes
/// remove the instance from the split.
pub fn merge_corrections(base: &CorpusSplit, outcomes: &[AggregationOutcome]) -> Result<CorpusSplit> {
    let mut by_pair: HashMap<&str, &AggregationOutcome> = HashMap::with_capacity(outcomes.len());
    for outcome in outcomes {
        let inst = base.get(&outcome.pair_id).ok_or_else(|| {
            Error::Integrity(format!("outcome references unknown pair {:?}", outcome.pair_id))
        })?;
        if inst.label != Label::Neutral || inst.source != Source::Original {
            return Err(Error::Integrity(format!(
                "outcome references pair {:?} which is not an original neutral instance",
                outcome.pair_id
            )));
        }
        if by_pair.insert(outcome.pair_id.as_str(), outcome).is_some() {
            return Err(Error::Integrity(format!(
                "multiple outcomes for pair {:?}",
                outcome.pair_id
            )));
        }
    }

    let mut merged = Vec::with_capacity(base.len());
    for inst in base.instances() {
        match by_pair.get(inst.pair_id.as_str()) {
            None => merged.push(inst.clone()),
            Some(outcome) => match outcome.decision {
                Decision::Ambiguous => {}
                Decision::Majority { label, .. } => {
                    if outcome.majority_explanations.is_empty() {
                        return Err(Error::Integrity(format!(
                            "majority outcome for {:?} carries no explanations",
                            outcome.pair_id
                        )));
                    }
                    let mut corrected = inst.clone();
                    corrected.label = label;
                    corrected.source = Source::Corrected;
                    corrected.explanations = outcome.majority_explanations.clone();
                    merged.push(corrected);
                }
            },
        }
    }
    CorpusSplit::new(base.name, merged)
}

/// Non-fatal findings from [`attach_explanations`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AttachReport {
    /// Source keys with no matching pair in the split.
    pub unknown_pairs: Vec<String>,
    /// Pairs whose explanation list was cut to [`MAX_EXPLANATIONS`].
    pub truncated_pairs: Vec<String>,
    /// Corrected pairs present in the source and left untouched.
    pub skipped_corrected: Vec<String>,
}

/// Appends externally collected explanations to original instances.
///
/// Corrected instances keep the explanations gathered with their new label.
pub fn attach_explanations(
    split: &CorpusSplit,
    source: &BTreeMap<String, Vec<String>>,
) -> Result<(CorpusSplit, AttachReport)> {
    let mut report = AttachReport::default();
    let known: HashSet<&str> = split.instances().iter().map(|i| i.pair_id.as_str()).collect();
    report.unknown_pairs = source
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect();

    let mut out = Vec::with_capacity(split.len());
    for inst in split.instances() {
        let mut inst = inst.clone();
        if let Some(extra) = source.get(&inst.pair_id) {
            match inst.source {
                Source::Corrected => report.skipped_corrected.push(inst.pair_id.clone()),
                Source::Original => {
                    inst.explanations.extend(extra.iter().cloned());
                    if inst.explanations.len() > MAX_EXPLANATIONS {
                        inst.explanations.truncate(MAX_EXPLANATIONS);
                        report.truncated_pairs.push(inst.pair_id.clone());
                    }
                }
            }
        }
        out.push(inst);
    }
    Ok((CorpusSplit::new(split.name, out)?, report))
}

/// Per-split summary counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub n_instances: usize,
    pub n_images: usize,
    pub per_label_counts: BTreeMap<Label, usize>,
    pub n_explanations_original: usize,
    pub n_explanations_collected: usize,
    /// Distinct tokens over hypotheses and explanations.
    pub vocabulary_size: usize,
}

impl SplitStats {
    pub fn label_count(&self, label: Label) -> usize {
        self.per_label_counts.get(&label).copied().unwrap_or(0)
    }

    /// Plain-text table, one row per statistic.
    pub fn to_table(&self) -> String {
        let rows = [
            ("#Instances", self.n_instances),
            ("#Images", self.n_images),
            ("#Entailment", self.label_count(Label::Entailment)),
            ("#Neutral", self.label_count(Label::Neutral)),
            ("#Contradiction", self.label_count(Label::Contradiction)),
            ("#Explanations (original)", self.n_explanations_original),
            ("#Explanations (collected)", self.n_explanations_collected),
            ("Vocabulary size", self.vocabulary_size),
        ];
        let mut s = String::new();
        for (name, value) in rows {
            s.push_str(&format!("{name:<28}{value:>10}\n"));
        }
        s
    }
}

pub fn compute_stats(split: &CorpusSplit) -> SplitStats {
    let mut images = HashSet::new();
    let mut per_label_counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    let mut n_explanations_original = 0;
    let mut n_explanations_collected = 0;
    let mut vocab: BTreeSet<String> = BTreeSet::new();

    for inst in split.instances() {
        images.insert(inst.image_id.as_str());
        *per_label_counts.entry(inst.label).or_default() += 1;
        match inst.source {
            Source::Original => n_explanations_original += inst.explanations.len(),
            Source::Corrected => n_explanations_collected += inst.explanations.len(),
        }
        vocab.extend(tokenize(&inst.hypothesis));
        for e in &inst.explanations {
            vocab.extend(tokenize(e));
        }
    }

    SplitStats {
        n_instances: split.len(),
        n_images: images.len(),
        per_label_counts,
        n_explanations_original,
        n_explanations_collected,
        vocabulary_size: vocab.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qc::{AggregationOutcome, Decision};

    fn inst(id: &str, img: &str, hyp: &str, label: Label) -> Instance {
        Instance::new(id, img, hyp, label)
    }

    fn majority(id: &str, label: Label, expls: &[&str]) -> AggregationOutcome {
        AggregationOutcome {
            pair_id: id.into(),
            decision: Decision::Majority {
                label,
                agreement: expls.len() as u8,
            },
            majority_explanations: expls.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn ambiguous(id: &str) -> AggregationOutcome {
        AggregationOutcome {
            pair_id: id.into(),
            decision: Decision::Ambiguous,
            majority_explanations: vec![],
        }
    }

    #[test]
    fn loads_in_file_order() {
        let text = r#"{"pair_id":"b","image_id":"i1","hypothesis":"A dog runs.","label":"entailment","explanations":[],"source":"original"}
{"pair_id":"a","image_id":"i1","hypothesis":"A cat sleeps.","label":"neutral"}
{"pair_id":"c","image_id":"i2","hypothesis":"Nobody is here.","label":"contradiction","explanations":["x"],"source":"original"}
"#;
        let split = read_split(text.as_bytes(), SplitName::Validation, Path::new("fixture")).unwrap();
        let ids: Vec<_> = split.instances().iter().map(|i| i.pair_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
    }

    #[test]
    fn duplicate_pair_is_integrity_error() {
        let text = r#"{"pair_id":"p1","image_id":"i1","hypothesis":"A dog.","label":"neutral"}
{"pair_id":"p1","image_id":"i2","hypothesis":"A cat.","label":"neutral"}
"#;
        let err = read_split(text.as_bytes(), SplitName::Test, Path::new("f")).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "{\"pair_id\":\"p1\",\"image_id\":\"i1\",\"hypothesis\":\"A dog.\",\"label\":\"neutral\"}\n\nnot json\n";
        match read_split(text.as_bytes(), SplitName::Test, Path::new("f")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_hypothesis_rejected() {
        let err = CorpusSplit::new(SplitName::Test, vec![inst("p", "i", " . ", Label::Neutral)]);
        // "." is a token, so this one is fine; whitespace-only is not.
        assert!(err.is_ok());
        let err = CorpusSplit::new(SplitName::Test, vec![inst("p", "i", "   ", Label::Neutral)]);
        assert!(matches!(err, Err(Error::Integrity(_))));
    }

    #[test]
    fn merge_relabels_neutral_to_entailment() {
        let base = CorpusSplit::new(
            SplitName::Validation,
            vec![inst("p1", "i", "The crowd is outdoors.", Label::Neutral)],
        )
        .unwrap();
        let merged = merge_corrections(&base, &[majority("p1", Label::Entailment, &["a", "b"])]).unwrap();
        let p1 = merged.get("p1").unwrap();
        assert_eq!(p1.label, Label::Entailment);
        assert_eq!(p1.source, Source::Corrected);
        assert_eq!(p1.explanations, ["a", "b"]);
    }

    #[test]
    fn merge_drops_ambiguous_and_keeps_others() {
        let base = CorpusSplit::new(
            SplitName::Validation,
            vec![
                inst("p6", "i", "A flag.", Label::Neutral),
                inst("p7", "i", "They hold a flag.", Label::Neutral),
                inst("p8", "i", "A dog.", Label::Entailment),
            ],
        )
        .unwrap();
        let merged = merge_corrections(&base, &[ambiguous("p7")]).unwrap();
        assert!(merged.get("p7").is_none());
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.get("p6"), base.get("p6"));
        assert_eq!(merged.get("p8"), base.get("p8"));
    }

    #[test]
    fn merge_with_no_outcomes_is_identity() {
        let base = CorpusSplit::new(
            SplitName::Test,
            vec![inst("p1", "i", "A dog.", Label::Neutral), inst("p2", "j", "A cat.", Label::Entailment)],
        )
        .unwrap();
        assert_eq!(merge_corrections(&base, &[]).unwrap(), base);
    }

    #[test]
    fn merge_rejects_non_neutral_and_missing() {
        let base = CorpusSplit::new(SplitName::Test, vec![inst("p1", "i", "A dog.", Label::Entailment)]).unwrap();
        assert!(matches!(
            merge_corrections(&base, &[ambiguous("p1")]),
            Err(Error::Integrity(_))
        ));
        assert!(matches!(
            merge_corrections(&base, &[ambiguous("zz")]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn merge_twice_is_rejected() {
        let base = CorpusSplit::new(SplitName::Test, vec![inst("p1", "i", "A dog.", Label::Neutral)]).unwrap();
        let outcomes = [majority("p1", Label::Neutral, &["x", "y", "z"])];
        let once = merge_corrections(&base, &outcomes).unwrap();
        assert!(matches!(merge_corrections(&once, &outcomes), Err(Error::Integrity(_))));
    }

    #[test]
    fn attach_to_original_and_skip_corrected() {
        let mut corrected = inst("p2", "i", "A man.", Label::Entailment);
        corrected.source = Source::Corrected;
        corrected.explanations = vec!["collected".into()];
        let split = CorpusSplit::new(
            SplitName::Validation,
            vec![inst("p1", "i", "A dog.", Label::Contradiction), corrected.clone()],
        )
        .unwrap();
        let mut source = BTreeMap::new();
        source.insert("p1".to_string(), vec!["e1".into(), "e2".into(), "e3".into()]);
        source.insert("p2".to_string(), vec!["old".into()]);
        source.insert("ghost".to_string(), vec!["x".into()]);
        let (out, report) = attach_explanations(&split, &source).unwrap();
        assert_eq!(out.get("p1").unwrap().explanations.len(), 3);
        assert_eq!(out.get("p2").unwrap(), &corrected);
        assert_eq!(report.unknown_pairs, ["ghost"]);
        assert_eq!(report.skipped_corrected, ["p2"]);
    }

    #[test]
    fn attach_empty_map_is_identity() {
        let split = CorpusSplit::new(SplitName::Train, vec![inst("p1", "i", "A dog.", Label::Neutral)]).unwrap();
        let (out, report) = attach_explanations(&split, &BTreeMap::new()).unwrap();
        assert_eq!(out, split);
        assert_eq!(report, AttachReport::default());
    }

    #[test]
    fn attach_truncates_past_three() {
        let mut i = inst("p1", "i", "A dog.", Label::Neutral);
        i.explanations = vec!["a".into(), "b".into()];
        let split = CorpusSplit::new(SplitName::Test, vec![i]).unwrap();
        let source = BTreeMap::from([("p1".to_string(), vec!["c".to_string(), "d".to_string()])]);
        let (out, report) = attach_explanations(&split, &source).unwrap();
        assert_eq!(out.get("p1").unwrap().explanations, ["a", "b", "c"]);
        assert_eq!(report.truncated_pairs, ["p1"]);
    }

    #[test]
    fn stats_hand_count() {
        let split = CorpusSplit::new(
            SplitName::Test,
            vec![
                inst("1", "a", "Dog runs", Label::Entailment),
                inst("2", "a", "dog sleeps", Label::Entailment),
                inst("3", "b", "A cat", Label::Neutral),
                inst("4", "c", "A cat!", Label::Contradiction),
            ],
        )
        .unwrap();
        let s = compute_stats(&split);
        assert_eq!(s.n_images, 3);
        assert_eq!(s.label_count(Label::Entailment), 2);
        assert_eq!(s.label_count(Label::Neutral), 1);
        assert_eq!(s.label_count(Label::Contradiction), 1);
        // dog runs sleeps a cat !
        assert_eq!(s.vocabulary_size, 6);
    }

    #[test]
    fn stats_of_empty_split() {
        let s = compute_stats(&CorpusSplit::empty(SplitName::Train));
        assert_eq!(s.n_instances, 0);
        assert_eq!(s.n_images, 0);
        assert!(s.per_label_counts.values().all(|&c| c == 0));
        assert_eq!(s.vocabulary_size, 0);
    }

    #[test]
    fn label_parse_and_display() {
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            assert_eq!(Label::from_index(l.index()), Some(l));
        }
        assert!("maybe".parse::<Label>().is_err());
    }
}
