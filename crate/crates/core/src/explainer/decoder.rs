use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::beam::{beam_search, greedy, Hypothesis, StepModel};
use super::vocab::Vocab;
use crate::corpus::Label;
use crate::impl_params;
use crate::model::FusedRepresentation;
use crate::nn::{log_softmax, softmax, xavier_uniform, Linear, Lstm, LstmState, LstmTrace};
use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 40;
pub const DEFAULT_BEAM_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Dimension of the fused vector the initial state is projected from.
    pub fused_dim: usize,
    /// Feed the gold (training) or predicted (test) label token after the
    /// start token.
    pub condition_on_label: bool,
    /// Sum token cross-entropies instead of averaging them.
    #[serde(default)]
    pub sum_over_tokens: bool,
}

impl DecoderConfig {
    pub fn check(&self) -> Result<()> {
        let needed = if self.condition_on_label { Vocab::N_SPECIALS } else { Vocab::END_ID + 1 };
        if self.vocab_size < needed {
            return Err(Error::Configuration(format!(
                "decoder vocabulary of {} cannot hold the {needed} reserved ids",
                self.vocab_size
            )));
        }
        if self.embed_dim == 0 || self.hidden == 0 || self.fused_dim == 0 {
            return Err(Error::Configuration("decoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// LSTM decoder whose initial hidden and cell states are two separate
/// linear projections of the fused vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub config: DecoderConfig,
    pub embedding: ndarray::Array2<f64>,
    pub init_h: Linear,
    pub init_c: Linear,
    pub lstm: Lstm,
    pub out: Linear,
}

impl_params!(DecoderParams {
    embedding,
    init_h,
    init_c,
    lstm,
    out,
});

impl DecoderParams {
    pub fn init<R: Rng + ?Sized>(config: DecoderConfig, rng: &mut R) -> Result<Self> {
        config.check()?;
        let DecoderConfig {
            vocab_size: v,
            embed_dim: e,
            hidden: h,
            fused_dim: f,
            ..
        } = config;
        Ok(DecoderParams {
            config,
            embedding: xavier_uniform(v, e, rng),
            init_h: Linear::init(h, f, rng),
            init_c: Linear::init(h, f, rng),
            lstm: Lstm::init(e, h, rng),
            out: Linear::init(v, h, rng),
        })
    }

    pub fn zeros(config: DecoderConfig) -> Result<Self> {
        config.check()?;
        let DecoderConfig {
            vocab_size: v,
            embed_dim: e,
            hidden: h,
            fused_dim: f,
            ..
        } = config;
        Ok(DecoderParams {
            config,
            embedding: ndarray::Array2::zeros((v, e)),
            init_h: Linear::zeros(h, f),
            init_c: Linear::zeros(h, f),
            lstm: Lstm::zeros(e, h),
            out: Linear::zeros(v, h),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// Conditioning inputs fed before the first target token.
    pub fn prefix(&self, label: Option<Label>) -> Result<Vec<usize>> {
        match (self.config.condition_on_label, label) {
            (true, Some(l)) => Ok(vec![Vocab::START_ID, Vocab::label_id(l)]),
            (false, None) => Ok(vec![Vocab::START_ID]),
            (true, None) => Err(Error::Configuration("label-conditioned decoder needs a label".into())),
            (false, Some(_)) => Err(Error::Configuration("unconditioned decoder was given a label".into())),
        }
    }

    fn check_fused(&self, f: &FusedRepresentation) -> Result<()> {
        if f.0.len() != self.config.fused_dim {
            return Err(Error::Shape(format!(
                "fused vector has {} dims, decoder expects {}",
                f.0.len(),
                self.config.fused_dim
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self, f: &FusedRepresentation) -> Result<LstmState> {
        self.check_fused(f)?;
        Ok(LstmState {
            h: self.init_h.forward(f.0.view()),
            c: self.init_c.forward(f.0.view()),
        })
    }

    fn embed(&self, id: usize) -> Array1<f64> {
        self.embedding.row(id).to_owned()
    }

    /// State after consuming the conditioning prefix; its output scores the
    /// first explanation token.
    pub fn start_state(&self, f: &FusedRepresentation, label: Option<Label>) -> Result<LstmState> {
        let mut state = self.initial_state(f)?;
        for id in self.prefix(label)? {
            state = self.lstm.step(self.embedding.row(id), &state);
        }
        Ok(state)
    }

    /// Teacher-forced forward pass over `target ++ END`.
    pub fn trace(&self, f: &FusedRepresentation, label: Option<Label>, target: &[usize]) -> Result<DecoderTrace> {
        if target.is_empty() {
            return Err(Error::Argument("explanation target is empty".into()));
        }
        if let Some(&bad) = target.iter().find(|&&t| t >= self.vocab_size()) {
            return Err(Error::Argument(format!("token id {bad} outside vocabulary of {}", self.vocab_size())));
        }
        let init = self.initial_state(f)?;
        let prefix = self.prefix(label)?;
        let scored_from = prefix.len() - 1;
        let mut inputs = prefix;
        inputs.extend_from_slice(target);
        let mut targets = target.to_vec();
        targets.push(Vocab::END_ID);

        let xs: Vec<Array1<f64>> = inputs.iter().map(|&i| self.embed(i)).collect();
        let lstm = self.lstm.forward(&xs, init);
        let log_probs = lstm.outputs[scored_from..]
            .iter()
            .map(|h| log_softmax(self.out.forward(h.view()).view()))
            .collect();
        Ok(DecoderTrace {
            fused: f.0.clone(),
            inputs,
            scored_from,
            targets,
            lstm,
            log_probs,
            sum_over_tokens: self.config.sum_over_tokens,
        })
    }

    /// Accumulates gradients of `scale · trace.loss()` and returns the
    /// gradient on the fused vector.
    pub fn backward(&self, trace: &DecoderTrace, scale: f64, grad: &mut DecoderParams) -> Array1<f64> {
        let n = if trace.sum_over_tokens { 1.0 } else { trace.targets.len() as f64 };
        let hd = self.config.hidden;
        let mut d_outputs = vec![Array1::zeros(hd); trace.inputs.len()];
        for (k, (lp, &target)) in trace.log_probs.iter().zip(&trace.targets).enumerate() {
            let t = trace.scored_from + k;
            let mut d_logits = lp.mapv(f64::exp);
            d_logits[target] -= 1.0;
            d_logits *= scale / n;
            d_outputs[t] = self.out.backward(trace.lstm.outputs[t].view(), d_logits.view(), &mut grad.out);
        }
        let (dxs, d_init) = self.lstm.backward(&trace.lstm, &d_outputs, &mut grad.lstm);
        for (&id, dx) in trace.inputs.iter().zip(&dxs) {
            let mut row = grad.embedding.row_mut(id);
            row += dx;
        }
        let f = trace.fused.view();
        self.init_h.backward(f, d_init.h.view(), &mut grad.init_h) + self.init_c.backward(f, d_init.c.view(), &mut grad.init_c)
    }
}

#[derive(Debug, Clone)]
pub struct DecoderTrace {
    fused: Array1<f64>,
    inputs: Vec<usize>,
    scored_from: usize,
    targets: Vec<usize>,
    lstm: LstmTrace,
    log_probs: Vec<Array1<f64>>,
    sum_over_tokens: bool,
}

impl DecoderTrace {
    /// Negative log-likelihood of every scored token (target ++ END).
    pub fn token_nll(&self) -> Vec<f64> {
        self.log_probs.iter().zip(&self.targets).map(|(lp, &t)| -lp[t]).collect()
    }

    /// Mean (or, if so configured, summed) per-token cross-entropy.
    pub fn loss(&self) -> f64 {
        let nll = self.token_nll();
        let total = nll.iter().sum::<f64>();
        if self.sum_over_tokens {
            total
        } else {
            total / nll.len() as f64
        }
    }
}

/// Teacher-forced cross-entropy over `target ++ END`.
pub fn decode_loss(f: &FusedRepresentation, label: Option<Label>, target: &[usize], params: &DecoderParams) -> Result<f64> {
    Ok(params.trace(f, label, target)?.loss())
}

impl StepModel for DecoderParams {
    type State = LstmState;

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn end_id(&self) -> usize {
        Vocab::END_ID
    }

    fn log_probs(&self, state: &LstmState) -> Array1<f64> {
        log_softmax(self.out.forward(state.h.view()).view())
    }

    fn advance(&self, state: &LstmState, token: usize) -> LstmState {
        self.lstm.step(self.embedding.row(token), state)
    }
}

/// Next-token probabilities after the conditioning prefix.
pub fn first_token_distribution(f: &FusedRepresentation, label: Option<Label>, params: &DecoderParams) -> Result<Array1<f64>> {
    let s = params.start_state(f, label)?;
    Ok(softmax(params.out.forward(s.h.view()).view()))
}

/// Best hypothesis under beam search; conditioning tokens are not part of
/// the output.
pub fn beam_decode(
    f: &FusedRepresentation,
    label: Option<Label>,
    params: &DecoderParams,
    width: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    if width == 0 || max_len == 0 {
        return Err(Error::Argument("beam width and max_len must be at least 1".into()));
    }
    let init = params.start_state(f, label)?;
    Ok(beam_search(params, init, width, max_len))
}

pub fn greedy_decode(f: &FusedRepresentation, label: Option<Label>, params: &DecoderParams, max_len: usize) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::Argument("max_len must be at least 1".into()));
    }
    let init = params.start_state(f, label)?;
    Ok(greedy(params, init, max_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradcheck, zeros_like};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(condition: bool) -> DecoderConfig {
        DecoderConfig {
            vocab_size: 12,
            embed_dim: 8,
            hidden: 8,
            fused_dim: 8,
            condition_on_label: condition,
            sum_over_tokens: false,
        }
    }

    fn fused(rng: &mut ChaCha8Rng) -> FusedRepresentation {
        FusedRepresentation(Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn uniform_output_gives_log_vocab() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = DecoderParams::init(config(false), &mut rng).unwrap();
        p.out = Linear::zeros(12, 8);
        let f = fused(&mut rng);
        for target in [vec![7], vec![9, 10, 11, 3]] {
            let l = decode_loss(&f, None, &target, &p).unwrap();
            assert!((l - 12f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn label_presence_must_match_configuration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = fused(&mut rng);
        let cond = DecoderParams::init(config(true), &mut rng).unwrap();
        let plain = DecoderParams::init(config(false), &mut rng).unwrap();
        assert!(matches!(decode_loss(&f, None, &[8], &cond), Err(Error::Configuration(_))));
        assert!(matches!(decode_loss(&f, Some(Label::Neutral), &[8], &plain), Err(Error::Configuration(_))));
        assert!(matches!(decode_loss(&f, None, &[], &plain), Err(Error::Argument(_))));
    }

    #[test]
    fn label_token_changes_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DecoderParams::init(config(true), &mut rng).unwrap();
        let f = fused(&mut rng);
        let a = decode_loss(&f, Some(Label::Entailment), &[8, 9], &p).unwrap();
        let b = decode_loss(&f, Some(Label::Contradiction), &[8, 9], &p).unwrap();
        assert!((a - b).abs() > 1e-9);
    }

    #[test]
    fn teacher_forcing_agrees_with_step_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DecoderParams::init(config(true), &mut rng).unwrap();
        let f = fused(&mut rng);
        let target = [8usize, 10, 7];
        let tr = p.trace(&f, Some(Label::Neutral), &target).unwrap();
        let mut state = p.start_state(&f, Some(Label::Neutral)).unwrap();
        let mut nll = Vec::new();
        for &t in target.iter().chain(std::iter::once(&Vocab::END_ID)) {
            nll.push(-p.log_probs(&state)[t]);
            state = p.advance(&state, t);
        }
        for (a, b) in tr.token_nll().iter().zip(&nll) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn summed_loss_scales_the_mean_and_its_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mean = DecoderParams::init(config(true), &mut rng).unwrap();
        let mut sum = mean.clone();
        sum.config.sum_over_tokens = true;
        let f = fused(&mut rng);
        let target = [8usize, 10, 9];
        let n = (target.len() + 1) as f64;
        let (tm, ts) = (
            mean.trace(&f, Some(Label::Entailment), &target).unwrap(),
            sum.trace(&f, Some(Label::Entailment), &target).unwrap(),
        );
        assert!((ts.loss() - n * tm.loss()).abs() < 1e-12);
        let mut g = zeros_like(&sum);
        sum.backward(&ts, 1.0, &mut g);
        let r = gradcheck::check(&sum, &g, gradcheck::DEFAULT_STEP, gradcheck::DEFAULT_FLOOR, |q| {
            decode_loss(&f, Some(Label::Entailment), &target, q).unwrap()
        });
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for condition in [false, true] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let p = DecoderParams::init(config(condition), &mut rng).unwrap();
            let f = fused(&mut rng);
            let label = condition.then_some(Label::Contradiction);
            let target = [9usize, 3, 11];
            let tr = p.trace(&f, label, &target).unwrap();
            let mut g = zeros_like(&p);
            let d_f = p.backward(&tr, 1.0, &mut g);
            let r = gradcheck::check(&p, &g, gradcheck::DEFAULT_STEP, gradcheck::DEFAULT_FLOOR, |q| {
                decode_loss(&f, label, &target, q).unwrap()
            });
            assert!(r.max_relative_error < 1e-4, "{r:?}");

            let numeric = gradcheck::numeric_gradient(&f.0, gradcheck::DEFAULT_STEP, |x| {
                decode_loss(&FusedRepresentation(x.clone()), label, &target, &p).unwrap()
            });
            for (a, n) in d_f.iter().zip(&numeric) {
                assert!(gradcheck::relative_error(*a, *n, gradcheck::DEFAULT_FLOOR) < 1e-4);
            }
        }
    }

    #[test]
    fn beam_output_excludes_conditioning_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = DecoderParams::init(config(true), &mut rng).unwrap();
        let f = fused(&mut rng);
        let h = beam_decode(&f, Some(Label::Entailment), &p, 3, 6).unwrap();
        assert!(h.ids.len() <= 6);
        assert!(h.tokens().iter().all(|&t| t != Vocab::END_ID));
        assert_eq!(h, beam_decode(&f, Some(Label::Entailment), &p, 3, 6).unwrap());
        let g = greedy_decode(&f, Some(Label::Entailment), &p, 6).unwrap();
        assert_eq!(g, beam_decode(&f, Some(Label::Entailment), &p, 1, 6).unwrap());
    }
}
