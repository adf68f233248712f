use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, balanced_accuracy, ConfusionMatrix};
use crate::corpus::{CorpusSplit, Instance, Label};
use crate::{Error, Result};

/// Validation split a checkpoint was selected on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionSplit {
    Original,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSplit {
    Original,
    Corrected,
}

pub trait Predictor {
    fn predict(&self, instance: &Instance) -> Result<Label>;
}

impl<F> Predictor for F
where
    F: Fn(&Instance) -> Result<Label>,
{
    fn predict(&self, instance: &Instance) -> Result<Label> {
        self(instance)
    }
}

/// Test accuracies by selection split. Original test uses plain accuracy,
/// corrected test balanced accuracy; a checkpoint selected on the corrected
/// validation split is not scored on the original test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub original_on_original: f64,
    pub original_on_corrected: f64,
    pub corrected_on_corrected: f64,
}

impl EvaluationReport {
    pub fn cell(&self, selection: SelectionSplit, test: TestSplit) -> Option<f64> {
        match (selection, test) {
            (SelectionSplit::Original, TestSplit::Original) => Some(self.original_on_original),
            (SelectionSplit::Original, TestSplit::Corrected) => Some(self.original_on_corrected),
            (SelectionSplit::Corrected, TestSplit::Corrected) => Some(self.corrected_on_corrected),
            (SelectionSplit::Corrected, TestSplit::Original) => None,
        }
    }

    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("N/A".to_string(), |x| format!("{:.2}%", 100.0 * x));
        let mut s = format!("{:<28}{:>16}{:>16}\n", "", "val-original", "val-corrected");
        for (name, test) in [
            ("test-original (accuracy)", TestSplit::Original),
            ("test-corrected (balanced)", TestSplit::Corrected),
        ] {
            s.push_str(&format!(
                "{:<28}{:>16}{:>16}\n",
                name,
                fmt(self.cell(SelectionSplit::Original, test)),
                fmt(self.cell(SelectionSplit::Corrected, test))
            ));
        }
        s
    }
}

fn confusion<P: Predictor + ?Sized>(p: &P, split: &CorpusSplit) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for inst in split.instances() {
        cm.add(inst.label, p.predict(inst)?);
    }
    Ok(cm)
}

pub fn evaluate_matrix<P: Predictor + ?Sized>(
    checkpoints: &BTreeMap<SelectionSplit, &P>,
    test_original: &CorpusSplit,
    test_corrected: &CorpusSplit,
) -> Result<EvaluationReport> {
    let get = |s: SelectionSplit| {
        checkpoints
            .get(&s)
            .copied()
            .ok_or_else(|| Error::Configuration(format!("no checkpoint selected on the {s:?} validation split")))
    };
    let original = get(SelectionSplit::Original)?;
    let corrected = get(SelectionSplit::Corrected)?;
    Ok(EvaluationReport {
        original_on_original: accuracy(&confusion(original, test_original)?)?,
        original_on_corrected: balanced_accuracy(&confusion(original, test_corrected)?)?,
        corrected_on_corrected: balanced_accuracy(&confusion(corrected, test_corrected)?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitName;

    fn split(labels: &[Label]) -> CorpusSplit {
        let inst = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Instance::new(format!("p{i}"), "img", "a hypothesis", l))
            .collect();
        CorpusSplit::new(SplitName::Test, inst).unwrap()
    }

    #[test]
    fn stubbed_predictors_give_hand_values() {
        use Label::*;
        let original = split(&[Entailment, Neutral, Contradiction, Neutral]);
        let corrected = split(&[Entailment, Entailment, Neutral, Contradiction]);
        let always_e = |_: &Instance| -> Result<Label> { Ok(Entailment) };
        let by_id = |i: &Instance| -> Result<Label> { Ok(if i.pair_id == "p2" { Neutral } else { Contradiction }) };
        let mut ck: BTreeMap<SelectionSplit, &dyn Predictor> = BTreeMap::new();
        ck.insert(SelectionSplit::Original, &always_e);
        ck.insert(SelectionSplit::Corrected, &by_id);
        let r = evaluate_matrix(&ck, &original, &corrected).unwrap();
        assert_eq!(r.original_on_original, 0.25);
        // per class: E 2/2, N 0/1, C 0/1
        assert!((r.original_on_corrected - 1.0 / 3.0).abs() < 1e-15);
        // per class: E 0/2, N 1/1, C 1/1
        assert!((r.corrected_on_corrected - 2.0 / 3.0).abs() < 1e-15);
        let table = r.to_table();
        assert_eq!(table.matches("N/A").count(), 1);
        assert!(table.contains("25.00%"));
    }

    #[test]
    fn same_checkpoint_fills_corrected_row_equally() {
        use Label::*;
        let original = split(&[Entailment, Neutral, Contradiction]);
        let corrected = split(&[Entailment, Neutral, Contradiction, Contradiction]);
        let p = |i: &Instance| -> Result<Label> { Ok(if i.pair_id == "p0" { Entailment } else { Contradiction }) };
        let mut ck: BTreeMap<SelectionSplit, &dyn Predictor> = BTreeMap::new();
        ck.insert(SelectionSplit::Original, &p);
        ck.insert(SelectionSplit::Corrected, &p);
        let r = evaluate_matrix(&ck, &original, &corrected).unwrap();
        assert_eq!(r.original_on_corrected, r.corrected_on_corrected);
    }

    #[test]
    fn missing_checkpoint_is_a_configuration_error() {
        let s = split(&[Label::Entailment]);
        let p = |_: &Instance| -> Result<Label> { Ok(Label::Entailment) };
        let mut ck: BTreeMap<SelectionSplit, &dyn Predictor> = BTreeMap::new();
        ck.insert(SelectionSplit::Original, &p);
        assert!(matches!(evaluate_matrix(&ck, &s, &s), Err(Error::Configuration(_))));
    }
}
