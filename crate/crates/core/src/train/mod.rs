//! Mini-batch training with patience-based early stopping, evaluation
//! metrics, hyperparameter sweeps, the test-split evaluation matrix and the
//! human relevance-audit harness.

mod audit;
mod evaluate;
mod metrics;
mod sweep;
mod trainers;

pub use audit::{
    aggregate_audit, read_audit_sheet, relevance_audit, write_audit_sheet, AuditRow, AuditSample, AuditSummary,
    RelevanceScore,
};
pub use evaluate::{evaluate_matrix, EvaluationReport, Predictor, SelectionSplit, TestSplit};
pub use metrics::{accuracy, balanced_accuracy, perplexity, ConfusionMatrix, ReferenceScorer};
pub use sweep::{alpha_sweep, SweepReport, SweepRun};
pub use trainers::{
    build_examples, ButdTrainer, Example, ExplToLabelExample, ExplToLabelTrainer, JointTrainer,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::AdamConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionMetric {
    BalancedAccuracy,
    /// Plain accuracy, for selecting on the uncorrected validation split.
    Accuracy,
    Perplexity,
}

impl SelectionMetric {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, SelectionMetric::Perplexity)
    }

    /// Whether `candidate` strictly improves on `best`.
    pub fn improves(self, candidate: f64, best: f64) -> bool {
        if !candidate.is_finite() {
            return false;
        }
        if self.higher_is_better() {
            candidate > best
        } else {
            candidate < best
        }
    }
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "BALANCED_ACCURACY" => Ok(SelectionMetric::BalancedAccuracy),
            "ACCURACY" => Ok(SelectionMetric::Accuracy),
            "PERPLEXITY" => Ok(SelectionMetric::Perplexity),
            _ => Err(Error::Argument(format!("unknown selection metric {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: AdamConfig,
    pub alpha: f64,
    pub selection_metric: SelectionMetric,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 64,
            max_epochs: 100,
            patience: 3,
            optimizer: AdamConfig::default(),
            alpha: 0.4,
            selection_metric: SelectionMetric::BalancedAccuracy,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Configuration("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Configuration("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Configuration("max_epochs must be at least 1".into()));
        }
        crate::explainer::check_alpha(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_metric: f64,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub metric: SelectionMetric,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    /// 1-based epoch after which training ended.
    pub stop_epoch: usize,
}

impl TrainingHistory {
    pub fn selected(&self) -> &EpochRecord {
        &self.epochs[self.selected_epoch - 1]
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>5}  {:>12}  {:>12}  {}\n", "epoch", "train_loss", "validation", "checkpoint");
        for r in &self.epochs {
            let mark = if r.epoch == self.selected_epoch { "  *" } else { "" };
            s.push_str(&format!(
                "{:>5}  {:>12.6}  {:>12.6}  {}{mark}\n",
                r.epoch, r.train_loss, r.validation_metric, r.checkpoint_id
            ));
        }
        s
    }
}

/// Patience counter over a stream of validation metrics.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    metric: SelectionMetric,
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(metric: SelectionMetric, patience: usize) -> Self {
        EarlyStopping {
            metric,
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records the metric for `epoch`; returns `true` when it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        let better = match self.best {
            None => value.is_finite(),
            Some((_, best)) => self.metric.improves(value, best),
        };
        if better {
            self.best = Some((epoch, value));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        better
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }
}

/// Replays a metric sequence through the stopping rule and returns
/// `(selected_epoch, stop_epoch)`, both 1-based.
pub fn replay_stopping(metric: SelectionMetric, patience: usize, max_epochs: usize, values: &[f64]) -> (usize, usize) {
    let mut es = EarlyStopping::new(metric, patience);
    let mut stop = 0;
    for (i, &v) in values.iter().take(max_epochs).enumerate() {
        stop = i + 1;
        es.observe(stop, v);
        if es.should_stop() {
            break;
        }
    }
    (es.best_epoch().unwrap_or(1), stop)
}

/// A model the generic loop can fit.
pub trait Trainable {
    type Snapshot;

    fn train_len(&self) -> usize;
    /// Updates parameters on the given training examples; returns their
    /// mean loss.
    fn train_batch(&mut self, indices: &[usize]) -> Result<f64>;
    fn validation_metric(&mut self, metric: SelectionMetric) -> Result<f64>;
    fn snapshot(&self) -> Self::Snapshot;
}

/// Seeded mini-batch training with early stopping; returns the snapshot of
/// the selected epoch.
pub fn fit<T: Trainable>(model: &mut T, config: &TrainingConfig) -> Result<(T::Snapshot, TrainingHistory)> {
    config.validate()?;
    let n = model.train_len();
    if n == 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stopping = EarlyStopping::new(config.selection_metric, config.patience);
    let mut epochs = Vec::new();
    let mut best = None;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let loss = model.train_batch(chunk)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b + 1 });
            }
            loss_sum += loss * chunk.len() as f64;
        }
        let value = model.validation_metric(config.selection_metric)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            validation_metric: value,
            checkpoint_id: format!("epoch-{epoch:03}"),
        });
        if stopping.observe(epoch, value) || best.is_none() {
            best = Some(model.snapshot());
        }
        log::debug!("epoch {epoch}: loss {:.6}, validation {value:.6}", loss_sum / n as f64);
        if stopping.should_stop() {
            break;
        }
    }
    let stop_epoch = epochs.len();
    let history = TrainingHistory {
        metric: config.selection_metric,
        epochs,
        selected_epoch: stopping.best_epoch().unwrap_or(1),
        stop_epoch,
    };
    Ok((best.expect("at least one epoch ran"), history))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ignores training and replays scripted validation values.
    struct Scripted {
        values: Vec<f64>,
        epoch: usize,
    }

    impl Trainable for Scripted {
        type Snapshot = usize;
        fn train_len(&self) -> usize {
            5
        }
        fn train_batch(&mut self, _: &[usize]) -> Result<f64> {
            Ok(1.0)
        }
        fn validation_metric(&mut self, _: SelectionMetric) -> Result<f64> {
            self.epoch += 1;
            Ok(self.values[self.epoch - 1])
        }
        fn snapshot(&self) -> usize {
            self.epoch
        }
    }

    fn run(values: Vec<f64>, metric: SelectionMetric, patience: usize, max_epochs: usize) -> (usize, TrainingHistory) {
        let config = TrainingConfig {
            patience,
            max_epochs,
            selection_metric: metric,
            batch_size: 2,
            ..TrainingConfig::default()
        };
        fit(&mut Scripted { values, epoch: 0 }, &config).unwrap()
    }

    #[test]
    fn patience_three_stops_after_three_stale_epochs() {
        let (snap, h) = run(vec![0.50, 0.60, 0.59, 0.58, 0.57, 0.9], SelectionMetric::BalancedAccuracy, 3, 100);
        assert_eq!((h.selected_epoch, h.stop_epoch, snap), (2, 5, 2));
        assert_eq!(replay_stopping(SelectionMetric::BalancedAccuracy, 3, 100, &[0.50, 0.60, 0.59, 0.58, 0.57]), (2, 5));
    }

    #[test]
    fn ties_are_not_improvements() {
        let (_, h) = run(vec![0.5, 0.7, 0.7, 0.7, 0.7], SelectionMetric::Accuracy, 3, 100);
        assert_eq!((h.selected_epoch, h.stop_epoch), (2, 5));
    }

    #[test]
    fn perplexity_is_minimized() {
        let (_, h) = run(vec![9.0, 5.0, 6.0, 4.0, 4.0, 4.5, 7.0], SelectionMetric::Perplexity, 3, 100);
        assert_eq!((h.selected_epoch, h.stop_epoch), (4, 7));
    }

    #[test]
    fn runs_to_max_epochs_when_always_improving() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let (_, h) = run(values, SelectionMetric::BalancedAccuracy, 3, 100);
        assert_eq!((h.selected_epoch, h.stop_epoch), (100, 100));
    }

    #[test]
    fn config_validation() {
        let bad = TrainingConfig {
            patience: 0,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig {
            alpha: 1.5,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    struct Diverging;

    impl Trainable for Diverging {
        type Snapshot = ();
        fn train_len(&self) -> usize {
            4
        }
        fn train_batch(&mut self, _: &[usize]) -> Result<f64> {
            Ok(f64::NAN)
        }
        fn validation_metric(&mut self, _: SelectionMetric) -> Result<f64> {
            Ok(0.0)
        }
        fn snapshot(&self) {}
    }

    #[test]
    fn non_finite_loss_reports_position() {
        let err = fit(&mut Diverging, &TrainingConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, batch: 1 }));
    }
}
