use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::impl_params;
use crate::nn::{log_softmax, softmax, xavier_uniform, Linear, Lstm, LstmState, LstmTrace};
use crate::{Error, Result};

pub const DEFAULT_MLP_WIDTH: usize = 512;
pub const MLP_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplToLabelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub mlp_width: usize,
}

/// Classifies a label from explanation tokens alone: LSTM encoder, final
/// hidden state, three ReLU layers, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplToLabelParams {
    pub config: ExplToLabelConfig,
    pub embedding: Array2<f64>,
    pub encoder: Lstm,
    pub layers: Vec<Linear>,
    pub out: Linear,
}

impl_params!(ExplToLabelParams {
    embedding,
    encoder,
    layers,
    out,
});

#[derive(Debug, Clone)]
pub struct ExplToLabelTrace {
    ids: Vec<usize>,
    lstm: LstmTrace,
    /// Post-activation output of each ReLU layer.
    acts: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
}

impl ExplToLabelTrace {
    pub fn probabilities(&self) -> Array1<f64> {
        softmax(self.logits.view())
    }

    pub fn cross_entropy(&self, label: Label) -> f64 {
        -log_softmax(self.logits.view())[label.index()]
    }

    pub fn cross_entropy_grad(&self, label: Label) -> Array1<f64> {
        let mut g = self.probabilities();
        g[label.index()] -= 1.0;
        g
    }
}

impl ExplToLabelParams {
    pub fn init<R: Rng + ?Sized>(config: ExplToLabelConfig, rng: &mut R) -> Result<Self> {
        let ExplToLabelConfig {
            vocab_size: v,
            embed_dim: e,
            hidden: h,
            mlp_width: w,
        } = config;
        if v == 0 || e == 0 || h == 0 || w == 0 {
            return Err(Error::Configuration("classifier dimensions must be positive".into()));
        }
        let mut layers = vec![Linear::init(w, h, rng)];
        for _ in 1..MLP_DEPTH {
            layers.push(Linear::init(w, w, rng));
        }
        Ok(ExplToLabelParams {
            config,
            embedding: xavier_uniform(v, e, rng),
            encoder: Lstm::init(e, h, rng),
            layers,
            out: Linear::init(Label::ALL.len(), w, rng),
        })
    }

    pub fn trace(&self, ids: &[usize]) -> Result<ExplToLabelTrace> {
        if ids.is_empty() {
            return Err(Error::Argument("explanation is empty".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::Argument(format!("token id {bad} outside vocabulary of {}", self.config.vocab_size)));
        }
        let xs: Vec<Array1<f64>> = ids.iter().map(|&i| self.embedding.row(i).to_owned()).collect();
        let lstm = self.encoder.forward(&xs, LstmState::zeros(self.config.hidden));
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut x = lstm.final_state.h.clone();
        for layer in &self.layers {
            x = layer.forward(x.view()).mapv(|v| v.max(0.0));
            acts.push(x.clone());
        }
        let logits = self.out.forward(x.view());
        Ok(ExplToLabelTrace {
            ids: ids.to_vec(),
            lstm,
            acts,
            logits,
        })
    }

    pub fn backward(&self, trace: &ExplToLabelTrace, d_logits: &Array1<f64>, grad: &mut ExplToLabelParams) {
        let last = trace.acts.last().expect("at least one layer");
        let mut d = self.out.backward(last.view(), d_logits.view(), &mut grad.out);
        for k in (0..self.layers.len()).rev() {
            d.zip_mut_with(&trace.acts[k], |g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
            let input = if k == 0 { &trace.lstm.final_state.h } else { &trace.acts[k - 1] };
            d = self.layers[k].backward(input.view(), d.view(), &mut grad.layers[k]);
        }
        let n = trace.ids.len();
        let mut d_outputs = vec![Array1::zeros(self.config.hidden); n];
        d_outputs[n - 1] = d;
        let (dxs, _) = self.encoder.backward(&trace.lstm, &d_outputs, &mut grad.encoder);
        for (&id, dx) in trace.ids.iter().zip(&dxs) {
            let mut row = grad.embedding.row_mut(id);
            row += dx;
        }
    }
}

/// Label distribution for an explanation given as vocabulary ids.
pub fn expl_to_label(explanation: &[usize], params: &ExplToLabelParams) -> Result<Array1<f64>> {
    Ok(params.trace(explanation)?.probabilities())
}
