//! Explanation generation: vocabulary, the label-conditioned and
//! unconditioned LSTM decoders, beam search, the weighted joint loss and
//! the explanation-only label classifier.
//!
//! Two architectures share these parts:
//!
//! * **predict-and-explain** classifies from the fused vector, then decodes
//!   an explanation conditioned on the predicted label token;
//! * **explain-then-predict** decodes an explanation from the fused vector
//!   alone (trained with `alpha = 0`), and a separately trained
//!   [`ExplToLabelParams`] network reads the label off that explanation.

pub mod beam;
pub mod decoder;
pub mod expl_to_label;
pub mod vocab;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use beam::{beam_search, exhaustive_search, greedy, Hypothesis, StepModel};
pub use decoder::{
    beam_decode, decode_loss, greedy_decode, DecoderConfig, DecoderParams, DecoderTrace, DEFAULT_BEAM_WIDTH,
    DEFAULT_MAX_LEN,
};
pub use expl_to_label::{expl_to_label, ExplToLabelConfig, ExplToLabelParams, ExplToLabelTrace, DEFAULT_MLP_WIDTH};
pub use vocab::{build_vocab, explanation_corpus, label_token, Vocab, DEFAULT_MIN_COUNT};

use crate::corpus::Label;
use crate::impl_params;
use crate::model::{predict_label, ButdConfig, ButdParams, ButdTrace, TokenIndex};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    PredictAndExplain,
    ExplainThenPredict,
}

impl Architecture {
    pub fn conditions_on_label(self) -> bool {
        matches!(self, Architecture::PredictAndExplain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_label: f64,
    pub l_expl: f64,
    pub alpha: f64,
    pub total: f64,
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Argument(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// `alpha · l_label + (1 − alpha) · l_expl`.
pub fn combined_loss(l_label: f64, l_expl: f64, alpha: f64) -> Result<LossBreakdown> {
    check_alpha(alpha)?;
    for (name, v) in [("label", l_label), ("explanation", l_expl)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Argument(format!("{name} loss must be finite and non-negative, got {v}")));
        }
    }
    Ok(LossBreakdown {
        l_label,
        l_expl,
        alpha,
        total: alpha * l_label + (1.0 - alpha) * l_expl,
    })
}

/// Classifier and decoder trained together on the weighted loss.
#[derive(Debug, Clone, PartialEq)]
pub struct JointParams {
    pub classifier: ButdParams,
    pub decoder: DecoderParams,
}

impl_params!(JointParams { classifier, decoder });

#[derive(Debug, Clone)]
pub struct JointTrace {
    pub classifier: ButdTrace,
    pub decoder: DecoderTrace,
    pub label: Label,
    pub losses: LossBreakdown,
}

/// Test-time output of a joint model.
#[derive(Debug, Clone, PartialEq)]
pub struct Explained {
    pub probabilities: Array1<f64>,
    pub predicted: Label,
    pub hypothesis: Hypothesis,
}

impl JointParams {
    pub fn architecture(&self) -> Architecture {
        if self.decoder.config.condition_on_label {
            Architecture::PredictAndExplain
        } else {
            Architecture::ExplainThenPredict
        }
    }

    /// Forward pass with the gold label fed to a conditioned decoder.
    pub fn trace(&self, ids: &[usize], regions: Array2<f64>, label: Label, target: &[usize], alpha: f64) -> Result<JointTrace> {
        check_alpha(alpha)?;
        let classifier = self.classifier.trace(ids, regions)?;
        let cond = self.decoder.config.condition_on_label.then_some(label);
        let decoder = self.decoder.trace(&classifier.fused, cond, target)?;
        let losses = combined_loss(classifier.cross_entropy(label), decoder.loss(), alpha)?;
        Ok(JointTrace {
            classifier,
            decoder,
            label,
            losses,
        })
    }

    pub fn backward(&self, trace: &JointTrace, grad: &mut JointParams) {
        let alpha = trace.losses.alpha;
        let d_fused = self.decoder.backward(&trace.decoder, 1.0 - alpha, &mut grad.decoder);
        let d_logits = trace.classifier.cross_entropy_grad(trace.label) * alpha;
        self.classifier
            .backward(&trace.classifier, &d_logits, Some(&d_fused), &mut grad.classifier);
    }

    /// Classifies, then decodes. A conditioned decoder receives the
    /// classifier's argmax label.
    pub fn explain(&self, ids: &[usize], regions: Array2<f64>, width: usize, max_len: usize) -> Result<Explained> {
        let tr = self.classifier.trace(ids, regions)?;
        let probabilities = tr.probabilities();
        let predicted = predict_label(probabilities.view());
        let cond = self.decoder.config.condition_on_label.then_some(predicted);
        let hypothesis = beam_decode(&tr.fused, cond, &self.decoder, width, max_len)?;
        Ok(Explained {
            probabilities,
            predicted,
            hypothesis,
        })
    }
}

/// A joint network with the vocabularies it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub butd: ButdConfig,
    pub tokens: TokenIndex,
    pub vocab: Vocab,
    pub params: JointParams,
}

/// An explanation-to-label classifier with its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplToLabelModel {
    pub vocab: Vocab,
    pub params: ExplToLabelParams,
}

/// One line of a generated-explanation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedExplanation {
    pub pair_id: String,
    pub predicted_label: Label,
    pub explanation: String,
}

/// Tab-separated `pair_id`, `predicted_label`, `explanation`, with a header.
pub fn write_generated(path: impl AsRef<Path>, rows: &[GeneratedExplanation]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("pair_id\tpredicted_label\texplanation\n");
    for r in rows {
        for field in [&r.pair_id, &r.explanation] {
            if field.contains(['\t', '\n']) {
                return Err(Error::Format(format!("field {field:?} contains a tab or newline")));
            }
        }
        out.push_str(&format!("{}\t{}\t{}\n", r.pair_id, r.predicted_label, r.explanation));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_generated(path: impl AsRef<Path>) -> Result<Vec<GeneratedExplanation>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if n == 0 || line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let mut parts = line.splitn(3, '\t');
        let (Some(pair_id), Some(label), Some(explanation)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err("expected three tab-separated fields".into()));
        };
        let predicted_label = label.parse().map_err(|e: Error| parse_err(e.to_string()))?;
        rows.push(GeneratedExplanation {
            pair_id: pair_id.to_string(),
            predicted_label,
            explanation: explanation.to_string(),
        });
    }
    Ok(rows)
}
