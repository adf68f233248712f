use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;

use super::metrics::{accuracy, balanced_accuracy, ConfusionMatrix};
use super::{SelectionMetric, Trainable, TrainingConfig};
use crate::corpus::{CorpusSplit, Label};
use crate::explainer::{ExplToLabelParams, JointParams, Vocab};
use crate::features::RegionFeatureMatrix;
use crate::model::{predict_label, ButdParams, TokenIndex};
use crate::nn::{argmax, scale, zeros_like, Adam, Params};
use crate::text::tokenize;
use crate::{Error, Result};

/// An instance prepared for the numeric models.
#[derive(Debug, Clone)]
pub struct Example {
    pub pair_id: String,
    pub token_ids: Vec<usize>,
    pub regions: Arc<Array2<f64>>,
    pub label: Label,
    /// Encoded reference explanations; empty when no vocabulary was given
    /// or the instance has none.
    pub references: Vec<Vec<usize>>,
}

/// Encodes every instance of `split`, loading each image's regions once.
pub fn build_examples<F>(split: &CorpusSplit, mut features: F, tokens: &TokenIndex, vocab: Option<&Vocab>) -> Result<Vec<Example>>
where
    F: FnMut(&str) -> Result<RegionFeatureMatrix>,
{
    let mut cache: HashMap<String, Arc<Array2<f64>>> = HashMap::new();
    let mut out = Vec::with_capacity(split.len());
    for inst in split.instances() {
        let regions = match cache.get(&inst.image_id) {
            Some(r) => Arc::clone(r),
            None => {
                let m = features(&inst.image_id)?;
                if m.image_id != inst.image_id {
                    return Err(Error::Argument(format!(
                        "feature loader returned image {:?} for {:?}",
                        m.image_id, inst.image_id
                    )));
                }
                let r = Arc::new(m.to_f64());
                cache.insert(inst.image_id.clone(), Arc::clone(&r));
                r
            }
        };
        let token_ids = tokens.ids(&inst.hypothesis_tokens());
        if token_ids.is_empty() {
            return Err(Error::Data(format!("instance {} has an empty hypothesis", inst.pair_id)));
        }
        let references = match vocab {
            Some(v) => inst
                .explanations
                .iter()
                .map(|e| v.encode(&tokenize(e)))
                .filter(|ids| !ids.is_empty())
                .collect(),
            None => Vec::new(),
        };
        out.push(Example {
            pair_id: inst.pair_id.clone(),
            token_ids,
            regions,
            label: inst.label,
            references,
        });
    }
    Ok(out)
}

fn label_metric(cm: &ConfusionMatrix, metric: SelectionMetric) -> Result<f64> {
    match metric {
        SelectionMetric::BalancedAccuracy => balanced_accuracy(cm),
        SelectionMetric::Accuracy => accuracy(cm),
        SelectionMetric::Perplexity => Err(Error::Configuration("this model does not produce perplexity".into())),
    }
}

fn apply<P: Params + Clone>(adam: &mut Adam, params: &mut P, mut grad: P, batch: usize) {
    scale(&mut grad, 1.0 / batch as f64);
    adam.step(params, &grad);
}

/// Classifier-only training on cross-entropy.
#[derive(Debug, Clone)]
pub struct ButdTrainer {
    pub params: ButdParams,
    adam: Adam,
    freeze_embeddings: bool,
    train: Vec<Example>,
    validation: Vec<Example>,
}

impl ButdTrainer {
    pub fn new(params: ButdParams, config: &TrainingConfig, freeze_embeddings: bool, train: Vec<Example>, validation: Vec<Example>) -> Self {
        ButdTrainer {
            params,
            adam: Adam::new(config.optimizer),
            freeze_embeddings,
            train,
            validation,
        }
    }

    pub fn predict(params: &ButdParams, example: &Example) -> Result<Label> {
        let tr = params.trace(&example.token_ids, (*example.regions).clone())?;
        Ok(predict_label(tr.probabilities().view()))
    }

    pub fn confusion(params: &ButdParams, examples: &[Example]) -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::default();
        for ex in examples {
            cm.add(ex.label, Self::predict(params, ex)?);
        }
        Ok(cm)
    }

    pub fn train_examples(&self) -> &[Example] {
        &self.train
    }
}

impl Trainable for ButdTrainer {
    type Snapshot = ButdParams;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_batch(&mut self, indices: &[usize]) -> Result<f64> {
        let mut grad = zeros_like(&self.params);
        let mut loss = 0.0;
        for &i in indices {
            let ex = &self.train[i];
            let tr = self.params.trace(&ex.token_ids, (*ex.regions).clone())?;
            loss += tr.cross_entropy(ex.label);
            self.params.backward(&tr, &tr.cross_entropy_grad(ex.label), None, &mut grad);
        }
        if self.freeze_embeddings {
            grad.embedding.fill(0.0);
        }
        apply(&mut self.adam, &mut self.params, grad, indices.len());
        Ok(loss / indices.len() as f64)
    }

    fn validation_metric(&mut self, metric: SelectionMetric) -> Result<f64> {
        label_metric(&Self::confusion(&self.params, &self.validation)?, metric)
    }

    fn snapshot(&self) -> ButdParams {
        self.params.clone()
    }
}

/// Classifier plus explanation decoder on the weighted joint loss. Each
/// (instance, reference) pair is one training example.
#[derive(Debug, Clone)]
pub struct JointTrainer {
    pub params: JointParams,
    alpha: f64,
    adam: Adam,
    freeze_embeddings: bool,
    train: Vec<Example>,
    pairs: Vec<(usize, usize)>,
    validation: Vec<Example>,
}

impl JointTrainer {
    pub fn new(params: JointParams, config: &TrainingConfig, freeze_embeddings: bool, train: Vec<Example>, validation: Vec<Example>) -> Self {
        let pairs = train
            .iter()
            .enumerate()
            .flat_map(|(i, ex)| (0..ex.references.len()).map(move |r| (i, r)))
            .collect();
        JointTrainer {
            params,
            alpha: config.alpha,
            adam: Adam::new(config.optimizer),
            freeze_embeddings,
            train,
            pairs,
            validation,
        }
    }

    /// Token negative log-likelihoods of a reference, teacher-forced with
    /// the gold label when the decoder is conditioned.
    pub fn reference_nll(params: &JointParams, example: &Example, reference: &[usize]) -> Result<Vec<f64>> {
        let tr = params.trace(&example.token_ids, (*example.regions).clone(), example.label, reference, 0.0)?;
        Ok(tr.decoder.token_nll())
    }

    pub fn perplexity(params: &JointParams, examples: &[Example]) -> Result<f64> {
        let (mut total, mut count) = (0.0, 0usize);
        for ex in examples {
            if ex.references.is_empty() {
                return Err(Error::Data(format!("instance {} has no reference explanation", ex.pair_id)));
            }
            for r in &ex.references {
                let nll = Self::reference_nll(params, ex, r)?;
                total += nll.iter().sum::<f64>();
                count += nll.len();
            }
        }
        if count == 0 {
            return Err(Error::Data("no reference tokens to score".into()));
        }
        Ok((total / count as f64).exp())
    }

    pub fn confusion(params: &JointParams, examples: &[Example]) -> Result<ConfusionMatrix> {
        ButdTrainer::confusion(&params.classifier, examples)
    }
}

impl Trainable for JointTrainer {
    type Snapshot = JointParams;

    fn train_len(&self) -> usize {
        self.pairs.len()
    }

    fn train_batch(&mut self, indices: &[usize]) -> Result<f64> {
        let mut grad = zeros_like(&self.params);
        let mut loss = 0.0;
        for &i in indices {
            let (e, r) = self.pairs[i];
            let ex = &self.train[e];
            let tr = self
                .params
                .trace(&ex.token_ids, (*ex.regions).clone(), ex.label, &ex.references[r], self.alpha)?;
            loss += tr.losses.total;
            self.params.backward(&tr, &mut grad);
        }
        if self.freeze_embeddings {
            grad.classifier.embedding.fill(0.0);
        }
        apply(&mut self.adam, &mut self.params, grad, indices.len());
        Ok(loss / indices.len() as f64)
    }

    fn validation_metric(&mut self, metric: SelectionMetric) -> Result<f64> {
        match metric {
            SelectionMetric::Perplexity => Self::perplexity(&self.params, &self.validation),
            m => label_metric(&Self::confusion(&self.params, &self.validation)?, m),
        }
    }

    fn snapshot(&self) -> JointParams {
        self.params.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplToLabelExample {
    pub ids: Vec<usize>,
    pub label: Label,
}

impl ExplToLabelExample {
    /// One example per non-empty reference explanation.
    pub fn from_split(split: &CorpusSplit, vocab: &Vocab) -> Vec<Self> {
        split
            .instances()
            .iter()
            .flat_map(|inst| {
                inst.explanations.iter().filter_map(move |e| {
                    let ids = vocab.encode(&tokenize(e));
                    (!ids.is_empty()).then_some(ExplToLabelExample { ids, label: inst.label })
                })
            })
            .collect()
    }
}

/// Label-from-explanation classifier on cross-entropy.
#[derive(Debug, Clone)]
pub struct ExplToLabelTrainer {
    pub params: ExplToLabelParams,
    adam: Adam,
    train: Vec<ExplToLabelExample>,
    validation: Vec<ExplToLabelExample>,
}

impl ExplToLabelTrainer {
    pub fn new(params: ExplToLabelParams, config: &TrainingConfig, train: Vec<ExplToLabelExample>, validation: Vec<ExplToLabelExample>) -> Self {
        ExplToLabelTrainer {
            params,
            adam: Adam::new(config.optimizer),
            train,
            validation,
        }
    }

    pub fn predict(params: &ExplToLabelParams, ids: &[usize]) -> Result<Label> {
        let p = params.trace(ids)?.probabilities();
        Ok(Label::from_index(argmax(p.view())).expect("three classes"))
    }

    pub fn confusion(params: &ExplToLabelParams, examples: &[ExplToLabelExample]) -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::default();
        for ex in examples {
            cm.add(ex.label, Self::predict(params, &ex.ids)?);
        }
        Ok(cm)
    }
}

impl Trainable for ExplToLabelTrainer {
    type Snapshot = ExplToLabelParams;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_batch(&mut self, indices: &[usize]) -> Result<f64> {
        let mut grad = zeros_like(&self.params);
        let mut loss = 0.0;
        for &i in indices {
            let ex = &self.train[i];
            let tr = self.params.trace(&ex.ids)?;
            loss += tr.cross_entropy(ex.label);
            self.params.backward(&tr, &tr.cross_entropy_grad(ex.label), &mut grad);
        }
        apply(&mut self.adam, &mut self.params, grad, indices.len());
        Ok(loss / indices.len() as f64)
    }

    fn validation_metric(&mut self, metric: SelectionMetric) -> Result<f64> {
        label_metric(&Self::confusion(&self.params, &self.validation)?, metric)
    }

    fn snapshot(&self) -> ExplToLabelParams {
        self.params.clone()
    }
}
