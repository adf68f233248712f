use std::cmp::Ordering;

use ndarray::Array1;

/// An autoregressive scorer: given a state that has consumed a prefix,
/// yields log-probabilities for the next token.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn end_id(&self) -> usize;
    fn log_probs(&self, state: &Self::State) -> Array1<f64>;
    fn advance(&self, state: &Self::State, token: usize) -> Self::State;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated ids, including the end token when one was produced.
    pub ids: Vec<usize>,
    /// Sum of token log-probabilities.
    pub score: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Ids without the trailing end token.
    pub fn tokens(&self) -> &[usize] {
        if self.finished {
            &self.ids[..self.ids.len() - 1]
        } else {
            &self.ids
        }
    }
}

/// Higher score first, then the lexicographically smaller id sequence.
fn rank(a_score: f64, a_ids: &[usize], b_score: f64, b_ids: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_ids.cmp(b_ids))
}

/// Beam search without length normalization.
///
/// Each step expands every live beam by every token and keeps the best
/// `width` candidates overall. Candidates ending in the end token, or
/// reaching `max_len` tokens, are set aside as completed. Search stops
/// once no beams remain or the best completed score is strictly above
/// every live score.
pub fn beam_search<M: StepModel>(model: &M, init: M::State, width: usize, max_len: usize) -> Hypothesis {
    assert!(width >= 1 && max_len >= 1, "width and max_len must be positive");
    let end = model.end_id();
    let mut live: Vec<(Vec<usize>, f64, M::State)> = vec![(Vec::new(), 0.0, init)];
    let mut completed: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        let mut candidates: Vec<(usize, usize, f64, Vec<usize>)> = Vec::new();
        for (b, (ids, score, state)) in live.iter().enumerate() {
            let lp = model.log_probs(state);
            for (tok, &l) in lp.iter().enumerate() {
                let mut next = ids.clone();
                next.push(tok);
                candidates.push((b, tok, score + l, next));
            }
        }
        candidates.sort_by(|a, b| rank(a.2, &a.3, b.2, &b.3));
        candidates.truncate(width);

        let mut next_live = Vec::new();
        for (b, tok, score, ids) in candidates {
            if tok == end {
                completed.push(Hypothesis { ids, score, finished: true });
            } else if ids.len() == max_len {
                completed.push(Hypothesis { ids, score, finished: false });
            } else {
                let state = model.advance(&live[b].2, tok);
                next_live.push((ids, score, state));
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
        let best_live = live.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
        if completed.iter().any(|c| c.score > best_live) {
            break;
        }
    }
    completed
        .into_iter()
        .min_by(|a, b| rank(a.score, &a.ids, b.score, &b.ids))
        .expect("at least one hypothesis completes by max_len")
}

/// Picks the most probable token at each step (lowest id on ties).
pub fn greedy<M: StepModel>(model: &M, init: M::State, max_len: usize) -> Hypothesis {
    let end = model.end_id();
    let mut state = init;
    let mut ids = Vec::new();
    let mut score = 0.0;
    while ids.len() < max_len {
        let lp = model.log_probs(&state);
        let tok = crate::nn::argmax(lp.view());
        score += lp[tok];
        ids.push(tok);
        if tok == end {
            return Hypothesis { ids, score, finished: true };
        }
        state = model.advance(&state, tok);
    }
    Hypothesis { ids, score, finished: false }
}

/// Scores every sequence of at most `max_len` tokens that either ends in
/// the end token or is exactly `max_len` long, returning the best under
/// the same ranking as [`beam_search`]. Exponential; for testing.
pub fn exhaustive_search<M: StepModel>(model: &M, init: M::State, max_len: usize) -> Hypothesis {
    fn walk<M: StepModel>(
        model: &M,
        state: &M::State,
        prefix: &mut Vec<usize>,
        score: f64,
        max_len: usize,
        best: &mut Option<Hypothesis>,
    ) {
        let lp = model.log_probs(state);
        for tok in 0..model.vocab_size() {
            let s = score + lp[tok];
            prefix.push(tok);
            let finished = tok == model.end_id();
            if finished || prefix.len() == max_len {
                let better = match best {
                    None => true,
                    Some(b) => rank(s, prefix, b.score, &b.ids) == Ordering::Less,
                };
                if better {
                    *best = Some(Hypothesis { ids: prefix.clone(), score: s, finished });
                }
            } else {
                let next = model.advance(state, tok);
                walk(model, &next, prefix, s, max_len, best);
            }
            prefix.pop();
        }
    }
    let mut best = None;
    walk(model, &init, &mut Vec::new(), 0.0, max_len, &mut best);
    best.expect("vocabulary is non-empty")
}
