//! JSON checkpoints: a typed header, the model configuration, token lists
//! and every parameter tensor by name. `f64` values round-trip exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::explainer::{
    DecoderConfig, DecoderParams, ExplToLabelConfig, ExplToLabelModel, ExplToLabelParams, JointModel, JointParams, Vocab,
};
use crate::model::{ButdConfig, ButdModel, ButdParams, TokenIndex};
use crate::nn::Params;
use crate::{Error, Result};

pub const FORMAT: &str = "vte-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Butd,
    Joint,
    ExplToLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub config: serde_json::Value,
    /// Named token lists, e.g. the hypothesis index or the decoder vocabulary.
    pub vocabularies: BTreeMap<String, Vec<String>>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params<C: Serialize, P: Params + ?Sized>(kind: ModelKind, config: &C, params: &P) -> Result<Self> {
        let mut tensors = Vec::new();
        params.for_each(&mut |name, shape, data| {
            tensors.push(NamedTensor {
                name: name.to_string(),
                shape: shape.to_vec(),
                data: data.to_vec(),
            })
        });
        Ok(Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            kind,
            config: serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
            vocabularies: BTreeMap::new(),
            tensors,
        })
    }

    pub fn with_vocabulary(mut self, name: &str, tokens: Vec<String>) -> Self {
        self.vocabularies.insert(name.to_string(), tokens);
        self
    }

    pub fn config<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Format(format!("checkpoint config: {e}")))
    }

    pub fn vocabulary(&self, name: &str) -> Result<&[String]> {
        self.vocabularies
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Format(format!("checkpoint has no {name:?} vocabulary")))
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }

    /// Copies tensors into `params`, which must have exactly the same
    /// names and shapes.
    pub fn load_into<P: Params + ?Sized>(&self, params: &mut P) -> Result<()> {
        let by_name: HashMap<&str, &NamedTensor> = self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        if by_name.len() != self.tensors.len() {
            return Err(Error::Format("checkpoint repeats a tensor name".into()));
        }
        let mut problem = None;
        let mut expected = 0;
        params.for_each(&mut |name, shape, _| {
            expected += 1;
            match by_name.get(name) {
                None => problem.get_or_insert(format!("missing tensor {name}")),
                Some(t) if t.shape != shape || t.data.len() != t.shape.iter().product::<usize>() => problem
                    .get_or_insert(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)),
                Some(_) => return,
            };
        });
        if let Some(p) = problem {
            return Err(Error::Format(p));
        }
        if expected != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model has {expected}",
                self.tensors.len()
            )));
        }
        params.for_each_mut(&mut |name, data| data.copy_from_slice(&by_name[name].data));
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                c.format,
                c.version
            )));
        }
        Ok(c)
    }
}

const HYPOTHESIS_TOKENS: &str = "hypothesis";
const EXPLANATION_TOKENS: &str = "explanation";

#[derive(Serialize, Deserialize)]
struct JointConfig {
    butd: ButdConfig,
    decoder: DecoderConfig,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ExplToLabelSaved {
    model: ExplToLabelConfig,
    min_count: usize,
}

impl ButdModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::from_params(ModelKind::Butd, &self.config, &self.params)?
            .with_vocabulary(HYPOTHESIS_TOKENS, self.tokens.known_tokens().to_vec()))
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.expect_kind(ModelKind::Butd)?;
        let config: ButdConfig = c.config()?;
        let tokens = TokenIndex::new(c.vocabulary(HYPOTHESIS_TOKENS)?.iter().cloned());
        let mut params = ButdParams::zeros(&config, tokens.rows());
        c.load_into(&mut params)?;
        Ok(ButdModel { config, tokens, params })
    }
}

impl JointModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let config = JointConfig {
            butd: self.butd,
            decoder: self.params.decoder.config,
            min_count: self.vocab.min_count(),
        };
        Ok(Checkpoint::from_params(ModelKind::Joint, &config, &self.params)?
            .with_vocabulary(HYPOTHESIS_TOKENS, self.tokens.known_tokens().to_vec())
            .with_vocabulary(EXPLANATION_TOKENS, self.vocab.tokens().to_vec()))
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.expect_kind(ModelKind::Joint)?;
        let config: JointConfig = c.config()?;
        let tokens = TokenIndex::new(c.vocabulary(HYPOTHESIS_TOKENS)?.iter().cloned());
        let vocab = Vocab::from_token_list(c.vocabulary(EXPLANATION_TOKENS)?.to_vec(), config.min_count)?;
        if vocab.len() != config.decoder.vocab_size {
            return Err(Error::Format("decoder vocabulary size disagrees with its token list".into()));
        }
        let mut params = JointParams {
            classifier: ButdParams::zeros(&config.butd, tokens.rows()),
            decoder: DecoderParams::zeros(config.decoder)?,
        };
        c.load_into(&mut params)?;
        Ok(JointModel {
            butd: config.butd,
            tokens,
            vocab,
            params,
        })
    }
}

impl ExplToLabelModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let config = ExplToLabelSaved {
            model: self.params.config,
            min_count: self.vocab.min_count(),
        };
        Ok(Checkpoint::from_params(ModelKind::ExplToLabel, &config, &self.params)?
            .with_vocabulary(EXPLANATION_TOKENS, self.vocab.tokens().to_vec()))
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.expect_kind(ModelKind::ExplToLabel)?;
        let config: ExplToLabelSaved = c.config()?;
        let vocab = Vocab::from_token_list(c.vocabulary(EXPLANATION_TOKENS)?.to_vec(), config.min_count)?;
        let mut rng = rand::rng();
        let mut params = ExplToLabelParams::init(config.model, &mut rng)?;
        c.load_into(&mut params)?;
        Ok(ExplToLabelModel { vocab, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explainer::build_vocab;
    use crate::features::EmbeddingTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn butd_round_trip_is_exact() {
        let table = EmbeddingTable::random(["a", "b", "c"], 4, 1).unwrap();
        let m = ButdModel::new(ButdConfig::small(4, 5, 6), &table, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.to_checkpoint().unwrap().save(&p).unwrap();
        assert_eq!(ButdModel::from_checkpoint(&Checkpoint::load(&p).unwrap()).unwrap(), m);
    }

    #[test]
    fn joint_and_expl_to_label_round_trip() {
        let table = EmbeddingTable::random(["a", "b"], 4, 1).unwrap();
        let butd = ButdModel::new(ButdConfig::small(4, 5, 6), &table, 2).unwrap();
        let vocab = build_vocab(&[vec!["x", "y"]], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let decoder = DecoderParams::init(
            DecoderConfig {
                vocab_size: vocab.len(),
                embed_dim: 3,
                hidden: 4,
                fused_dim: 5,
                condition_on_label: true,
                sum_over_tokens: false,
            },
            &mut rng,
        )
        .unwrap();
        let joint = JointModel {
            butd: butd.config,
            tokens: butd.tokens.clone(),
            vocab: vocab.clone(),
            params: JointParams {
                classifier: butd.params.clone(),
                decoder,
            },
        };
        let c = joint.to_checkpoint().unwrap();
        assert_eq!(JointModel::from_checkpoint(&c).unwrap(), joint);
        assert!(ButdModel::from_checkpoint(&c).is_err());

        let cfg = ExplToLabelConfig {
            vocab_size: vocab.len(),
            embed_dim: 3,
            hidden: 4,
            mlp_width: 5,
        };
        let e = ExplToLabelModel {
            vocab,
            params: ExplToLabelParams::init(cfg, &mut rng).unwrap(),
        };
        assert_eq!(ExplToLabelModel::from_checkpoint(&e.to_checkpoint().unwrap()).unwrap(), e);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let table = EmbeddingTable::random(["a"], 4, 1).unwrap();
        let m = ButdModel::new(ButdConfig::small(4, 5, 6), &table, 2).unwrap();
        let mut c = m.to_checkpoint().unwrap();
        c.tensors[1].shape = vec![1, 1];
        assert!(matches!(ButdModel::from_checkpoint(&c), Err(Error::Format(_))));
    }
}
