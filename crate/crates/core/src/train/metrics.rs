use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, Instance, Label};
use crate::explainer::Vocab;
use crate::text::tokenize;
use crate::{Error, Result};

/// 3×3 counts; rows are gold labels, columns predictions, both in
/// [`Label::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn from_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (gold, predicted) in pairs {
            cm.add(gold, predicted);
        }
        cm
    }

    pub fn add(&mut self, gold: Label, predicted: Label) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, gold: Label) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    /// Accuracy on each gold class.
    pub fn per_class_accuracy(&self) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for label in Label::ALL {
            let row = self.row_total(label);
            if row == 0 {
                return Err(Error::UndefinedClass(label));
            }
            out[label.index()] = self.counts[label.index()][label.index()] as f64 / row as f64;
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: u64) -> Self {
        let mut c = self.counts;
        c.iter_mut().flatten().for_each(|x| *x *= factor);
        ConfusionMatrix { counts: c }
    }
}

/// Mean of the three per-class accuracies.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let per = cm.per_class_accuracy()?;
    Ok(per.iter().sum::<f64>() / 3.0)
}

/// Fraction of correct predictions.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::Data("accuracy over zero instances".into())),
        n => Ok(cm.correct() as f64 / n as f64),
    }
}

/// Teacher-forced scoring of reference explanations.
pub trait ReferenceScorer {
    /// Negative log-likelihood of every token of `reference ++ END`.
    fn reference_nll(&self, instance: &Instance, reference: &[usize]) -> Result<Vec<f64>>;
}

impl<F> ReferenceScorer for F
where
    F: Fn(&Instance, &[usize]) -> Result<Vec<f64>>,
{
    fn reference_nll(&self, instance: &Instance, reference: &[usize]) -> Result<Vec<f64>> {
        self(instance, reference)
    }
}

/// `exp` of the mean token negative log-likelihood over every reference of
/// every instance.
pub fn perplexity<S: ReferenceScorer + ?Sized>(model: &S, split: &CorpusSplit, vocab: &Vocab) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for instance in split.instances() {
        if instance.explanations.is_empty() {
            return Err(Error::Data(format!("instance {} has no reference explanation", instance.pair_id)));
        }
        for reference in &instance.explanations {
            let tokens = tokenize(reference);
            if tokens.is_empty() {
                return Err(Error::Data(format!("instance {} has an empty reference", instance.pair_id)));
            }
            let nll = model.reference_nll(instance, &vocab.encode(&tokens))?;
            total += nll.iter().sum::<f64>();
            count += nll.len();
        }
    }
    if count == 0 {
        return Err(Error::Data("no reference tokens to score".into()));
    }
    Ok((total / count as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitName;
    use crate::explainer::build_vocab;

    #[test]
    fn hand_matrix() {
        let cm = ConfusionMatrix::new([[4, 0, 0], [2, 2, 0], [1, 0, 3]]);
        assert_eq!(cm.per_class_accuracy().unwrap(), [1.0, 0.5, 0.75]);
        assert_eq!(balanced_accuracy(&cm).unwrap(), 0.75);
        assert_eq!(accuracy(&cm).unwrap(), 9.0 / 12.0);
    }

    #[test]
    fn perfect_diagonal_and_missing_class() {
        let cm = ConfusionMatrix::new([[3, 0, 0], [0, 5, 0], [0, 0, 1]]);
        assert_eq!(balanced_accuracy(&cm).unwrap(), 1.0);
        let cm = ConfusionMatrix::new([[3, 0, 0], [0, 0, 0], [0, 1, 1]]);
        assert!(matches!(balanced_accuracy(&cm), Err(Error::UndefinedClass(Label::Neutral))));
    }

    #[test]
    fn perplexity_of_hand_probabilities() {
        let mut a = Instance::new("a", "i", "h", Label::Entailment);
        a.explanations = vec!["x y".into()];
        let mut b = Instance::new("b", "i", "h", Label::Neutral);
        b.explanations = vec!["x".into(), "y".into()];
        let split = CorpusSplit::new(SplitName::Validation, vec![a, b]).unwrap();
        let vocab = build_vocab(&[vec!["x", "y"]], 1);
        // p(x)=0.5, p(y)=0.25, p(END)=0.8 regardless of context
        let scorer = |_: &Instance, r: &[usize]| -> Result<Vec<f64>> {
            let mut out: Vec<f64> = r.iter().map(|&t| if t == vocab.id("x") { -0.5f64.ln() } else { -0.25f64.ln() }).collect();
            out.push(-0.8f64.ln());
            Ok(out)
        };
        // tokens: [x y END] [x END] [y END] → 7 tokens
        let nll = -(2.0 * 0.5f64.ln() + 2.0 * 0.25f64.ln() + 3.0 * 0.8f64.ln());
        let expected = (nll / 7.0).exp();
        assert!((perplexity(&scorer, &split, &vocab).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn perplexity_requires_references() {
        let split = CorpusSplit::new(SplitName::Validation, vec![Instance::new("a", "i", "h", Label::Entailment)]).unwrap();
        let vocab = build_vocab::<String>(&[], 1);
        let scorer = |_: &Instance, _: &[usize]| -> Result<Vec<f64>> { Ok(vec![1.0]) };
        assert!(matches!(perplexity(&scorer, &split, &vocab), Err(Error::Data(_))));
    }
}
