use rayon::prelude::*;

use crate::explainer::check_alpha;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SweepRun<S> {
    pub alpha: f64,
    pub snapshot: S,
    /// Validation balanced accuracy of the selected checkpoint.
    pub validation_metric: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport<S> {
    /// One run per requested value, in request order.
    pub runs: Vec<SweepRun<S>>,
    /// Index into `runs` of the highest metric; the earliest value wins ties.
    pub winner: usize,
}

impl<S> SweepReport<S> {
    pub fn winner(&self) -> &SweepRun<S> {
        &self.runs[self.winner]
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>6}  {:>18}\n", "alpha", "validation_bal_acc");
        for (i, r) in self.runs.iter().enumerate() {
            let mark = if i == self.winner { "  *" } else { "" };
            s.push_str(&format!("{:>6.3}  {:>18.6}{mark}\n", r.alpha, r.validation_metric));
        }
        s
    }
}

/// Runs `train_one` independently for every alpha (in parallel) and picks
/// the run with the highest validation metric.
pub fn alpha_sweep<S, F>(values: &[f64], train_one: F) -> Result<SweepReport<S>>
where
    S: Send,
    F: Fn(f64) -> Result<(S, f64)> + Sync,
{
    if values.is_empty() {
        return Err(Error::Argument("alpha sweep needs at least one value".into()));
    }
    for &a in values {
        check_alpha(a)?;
    }
    let runs = values
        .par_iter()
        .map(|&alpha| {
            train_one(alpha).map(|(snapshot, validation_metric)| SweepRun {
                alpha,
                snapshot,
                validation_metric,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut winner = 0;
    for (i, r) in runs.iter().enumerate() {
        let best = runs[winner].validation_metric;
        if r.validation_metric > best || (best.is_nan() && !r.validation_metric.is_nan()) {
            winner = i;
        }
    }
    Ok(SweepReport { runs, winner })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stubbed_metric_peaks_at_point_four() {
        let r = alpha_sweep(&[0.2, 0.4, 0.6, 0.8], |a| Ok(((), 1.0 - (a - 0.4f64).abs()))).unwrap();
        assert_eq!(r.runs.len(), 4);
        assert_eq!(r.winner().alpha, 0.4);
        assert_eq!(r.runs.iter().map(|x| x.alpha).collect::<Vec<_>>(), vec![0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn single_value_wins_and_ties_go_early() {
        assert_eq!(alpha_sweep(&[0.5], |_| Ok(((), 0.1))).unwrap().winner().alpha, 0.5);
        assert_eq!(alpha_sweep(&[0.6, 0.2, 0.4], |_| Ok(((), 0.3))).unwrap().winner().alpha, 0.6);
    }

    #[test]
    fn invalid_alpha_rejected_before_training() {
        let r = alpha_sweep(&[0.2, 1.2], |_| -> Result<((), f64)> { panic!("must not train") });
        assert!(matches!(r, Err(Error::Argument(_))));
        assert!(alpha_sweep::<(), _>(&[], |_| Ok(((), 0.0))).is_err());
    }
}
