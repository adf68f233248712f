use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vte_core::checkpoint::Checkpoint;
use vte_core::corpus::{load_split, CorpusSplit, SplitName};
use vte_core::explainer::{
    build_vocab, explanation_corpus, DecoderConfig, DecoderParams, ExplToLabelConfig, ExplToLabelModel, ExplToLabelParams,
    JointModel, JointParams, Vocab,
};
use vte_core::features::{EmbeddingTable, FeatureStore};
use vte_core::model::{ButdConfig, ButdModel};
use vte_core::nn::AdamConfig;
use vte_core::train::{
    alpha_sweep, build_examples, fit, ButdTrainer, Example, ExplToLabelExample, ExplToLabelTrainer, JointTrainer, SelectionMetric,
    TrainingConfig, TrainingHistory,
};

use super::{create_parent, write_json};
use crate::args::{ModelArgs, ModelChoice, SweepArgs, TrainArgs};
use crate::error::{CliError, CliResult};

/// Decoder and classifier initialisations draw from separate streams.
const DECODER_SEED_SALT: u64 = 0xD1B5_4A32_D192_ED03;

fn training_config(m: &ModelArgs, alpha: f64, metric: SelectionMetric) -> TrainingConfig {
    TrainingConfig {
        batch_size: m.batch_size,
        max_epochs: m.max_epochs,
        patience: m.patience,
        optimizer: AdamConfig {
            learning_rate: m.lr,
            ..AdamConfig::default()
        },
        alpha,
        selection_metric: metric,
        seed: m.seed,
    }
}

/// Splits, features and an initialised classifier shared by the visual
/// models.
struct VisualSetup {
    train: Vec<Example>,
    validation: Vec<Example>,
    model: ButdModel,
    vocab: Option<Vocab>,
}

impl VisualSetup {
    fn new(m: &ModelArgs, with_vocab: bool) -> CliResult<Self> {
        let train_split = load_split(&m.train, SplitName::Train)?;
        let validation_split = load_split(&m.validation, SplitName::Validation)?;
        let features = m
            .features
            .as_ref()
            .ok_or_else(|| CliError::Usage("--features is required for this model".into()))?;
        let store = FeatureStore::open(features)?;
        let first = train_split
            .instances()
            .first()
            .ok_or_else(|| CliError::Usage(format!("{} holds no instances", m.train.display())))?;
        let feature_dim = store.load(&first.image_id)?.dim();

        let table = match &m.embeddings {
            Some(path) => EmbeddingTable::load_text(path)?,
            None => EmbeddingTable::random(
                train_split.instances().iter().flat_map(|i| i.hypothesis_tokens()),
                m.embed_dim,
                m.seed,
            )?,
        };
        let config = ButdConfig {
            embed_dim: table.dim(),
            hidden: m.hidden,
            feature_dim,
            attention_dim: m.attention_dim,
            freeze_embeddings: !m.train_embeddings,
        };
        let model = ButdModel::new(config, &table, m.seed)?;
        let vocab = with_vocab.then(|| build_vocab(&explanation_corpus(&train_split), m.min_count));
        let load = |id: &str| store.load(id);
        let train = build_examples(&train_split, load, &model.tokens, vocab.as_ref())?;
        let validation = build_examples(&validation_split, load, &model.tokens, vocab.as_ref())?;
        log::info!(
            "{} training and {} validation instances, {} hypothesis tokens",
            train.len(),
            validation.len(),
            model.tokens.known_tokens().len()
        );
        Ok(VisualSetup {
            train,
            validation,
            model,
            vocab,
        })
    }

    fn joint_params(&self, m: &ModelArgs, condition_on_label: bool) -> CliResult<JointParams> {
        let vocab = self.vocab.as_ref().expect("joint setups build a vocabulary");
        let config = DecoderConfig {
            vocab_size: vocab.len(),
            embed_dim: m.decoder_embed_dim,
            hidden: m.decoder_hidden.unwrap_or(m.hidden),
            fused_dim: self.model.config.hidden,
            condition_on_label,
            sum_over_tokens: m.sum_explanation_loss,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(m.seed ^ DECODER_SEED_SALT);
        Ok(JointParams {
            classifier: self.model.params.clone(),
            decoder: DecoderParams::init(config, &mut rng)?,
        })
    }

    fn joint_model(&self, params: JointParams) -> JointModel {
        JointModel {
            butd: self.model.config,
            tokens: self.model.tokens.clone(),
            vocab: self.vocab.clone().expect("joint setups build a vocabulary"),
            params,
        }
    }

    /// Trains a joint model and returns it with its history.
    fn fit_joint(&self, m: &ModelArgs, config: &TrainingConfig, conditioned: bool) -> CliResult<(JointModel, TrainingHistory)> {
        let params = self.joint_params(m, conditioned)?;
        let mut trainer = JointTrainer::new(params, config, !m.train_embeddings, self.train.clone(), self.validation.clone());
        let (best, history) = fit(&mut trainer, config)?;
        Ok((self.joint_model(best), history))
    }
}

fn save_outputs(checkpoint: Checkpoint, history: &TrainingHistory, out: &Path, history_path: Option<&PathBuf>) -> CliResult<()> {
    print!("{}", history.to_table());
    let best = history.selected();
    println!(
        "selected epoch {} of {} ({:?} {:.6})",
        history.selected_epoch, history.stop_epoch, history.metric, best.validation_metric
    );
    create_parent(out)?;
    checkpoint.save(out)?;
    println!("wrote checkpoint {}", out.display());
    if let Some(path) = history_path {
        create_parent(path)?;
        write_json(path, history)?;
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let m = &a.common;
    let default_metric = match a.model {
        ModelChoice::Etp => SelectionMetric::Perplexity,
        _ => SelectionMetric::BalancedAccuracy,
    };
    let metric = m.selection_metric.unwrap_or(default_metric);
    let (checkpoint, history) = match a.model {
        ModelChoice::Butd => {
            let config = training_config(m, a.alpha, metric);
            let setup = VisualSetup::new(m, false)?;
            let mut trainer = ButdTrainer::new(setup.model.params.clone(), &config, !m.train_embeddings, setup.train, setup.validation);
            let (best, history) = fit(&mut trainer, &config)?;
            let model = ButdModel { params: best, ..setup.model };
            (model.to_checkpoint()?, history)
        }
        ModelChoice::Pae | ModelChoice::Etp => {
            let conditioned = a.model == ModelChoice::Pae;
            // The generator of an explain-then-predict pipeline is trained on
            // the explanation loss alone.
            let alpha = if conditioned { a.alpha } else { 0.0 };
            let config = training_config(m, alpha, metric);
            let setup = VisualSetup::new(m, true)?;
            let (model, history) = setup.fit_joint(m, &config, conditioned)?;
            (model.to_checkpoint()?, history)
        }
        ModelChoice::ExplToLabel => {
            let config = training_config(m, a.alpha, metric);
            let (model, history) = fit_expl_to_label(m, &config)?;
            (model.to_checkpoint()?, history)
        }
    };
    save_outputs(checkpoint, &history, &a.out, a.history.as_ref())
}

fn fit_expl_to_label(m: &ModelArgs, config: &TrainingConfig) -> CliResult<(ExplToLabelModel, TrainingHistory)> {
    let train_split: CorpusSplit = load_split(&m.train, SplitName::Train)?;
    let validation_split = load_split(&m.validation, SplitName::Validation)?;
    let vocab = build_vocab(&explanation_corpus(&train_split), m.min_count);
    let train = ExplToLabelExample::from_split(&train_split, &vocab);
    let validation = ExplToLabelExample::from_split(&validation_split, &vocab);
    if train.is_empty() || validation.is_empty() {
        return Err(CliError::Usage("explanation-to-label training needs explanations in both splits".into()));
    }
    let model_config = ExplToLabelConfig {
        vocab_size: vocab.len(),
        embed_dim: m.embed_dim,
        hidden: m.hidden,
        mlp_width: m.mlp_width,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let params = ExplToLabelParams::init(model_config, &mut rng)?;
    let mut trainer = ExplToLabelTrainer::new(params, config, train, validation);
    let (best, history) = fit(&mut trainer, config)?;
    Ok((ExplToLabelModel { vocab, params: best }, history))
}

#[derive(Serialize)]
struct SweepEntry {
    alpha: f64,
    validation_metric: f64,
    checkpoint: PathBuf,
}

#[derive(Serialize)]
struct SweepSummary {
    metric: SelectionMetric,
    runs: Vec<SweepEntry>,
    winner_alpha: f64,
}

pub fn sweep(a: SweepArgs) -> CliResult<()> {
    let m = &a.common;
    let metric = m.selection_metric.unwrap_or(SelectionMetric::BalancedAccuracy);
    let setup = VisualSetup::new(m, true)?;
    let report = alpha_sweep(&a.alphas, |alpha| {
        let config = training_config(m, alpha, metric);
        let (model, history) = setup.fit_joint(m, &config, true).map_err(|e| match e {
            CliError::Core(e) => e,
            other => vte_core::Error::Configuration(other.to_string()),
        })?;
        Ok((model, history.selected().validation_metric))
    })?;
    print!("{}", report.to_table());

    std::fs::create_dir_all(&a.out_dir).map_err(|e| vte_core::Error::io(&a.out_dir, e))?;
    let mut runs = Vec::with_capacity(report.runs.len());
    for run in &report.runs {
        let path = a.out_dir.join(format!("pae-alpha-{:.3}.json", run.alpha));
        run.snapshot.to_checkpoint()?.save(&path)?;
        runs.push(SweepEntry {
            alpha: run.alpha,
            validation_metric: run.validation_metric,
            checkpoint: path,
        });
    }
    let summary = SweepSummary {
        metric,
        runs,
        winner_alpha: report.winner().alpha,
    };
    write_json(&a.out_dir.join("sweep.json"), &summary)?;
    println!("best alpha {}", summary.winner_alpha);
    Ok(())
}
