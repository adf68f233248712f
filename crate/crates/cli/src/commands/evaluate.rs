use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use vte_core::checkpoint::{Checkpoint, ModelKind};
use vte_core::corpus::{load_split, CorpusSplit, Instance, Label, SplitName};
use vte_core::explainer::vocab::UNK;
use vte_core::explainer::{write_generated, ExplToLabelModel, GeneratedExplanation, JointModel};
use vte_core::features::{FeatureStore, RegionFeatureMatrix};
use vte_core::model::{predict_label, ButdParams, TokenIndex};
use vte_core::text::tokenize;
use vte_core::train::{balanced_accuracy, evaluate_matrix, ConfusionMatrix, ExplToLabelTrainer, Predictor, SelectionSplit};
use vte_core::Error;

use super::{create_parent, write_json};
use crate::args::{EvaluateArgs, GenerateArgs};
use crate::error::{CliError, CliResult};

/// Region features of every image in `splits`, loaded once.
fn load_regions(store: &FeatureStore, splits: &[&CorpusSplit]) -> CliResult<HashMap<String, RegionFeatureMatrix>> {
    let mut out = HashMap::new();
    for split in splits {
        for inst in split.instances() {
            if !out.contains_key(&inst.image_id) {
                out.insert(inst.image_id.clone(), store.load(&inst.image_id)?);
            }
        }
    }
    Ok(out)
}

/// The label head of a classifier or joint checkpoint.
struct LabelModel<'a> {
    tokens: TokenIndex,
    params: ButdParams,
    regions: &'a HashMap<String, RegionFeatureMatrix>,
}

impl<'a> LabelModel<'a> {
    fn load(path: &Path, regions: &'a HashMap<String, RegionFeatureMatrix>) -> CliResult<Self> {
        let c = Checkpoint::load(path)?;
        let (tokens, params) = match c.kind {
            ModelKind::Butd => {
                let m = vte_core::model::ButdModel::from_checkpoint(&c)?;
                (m.tokens, m.params)
            }
            ModelKind::Joint => {
                let m = JointModel::from_checkpoint(&c)?;
                (m.tokens, m.params.classifier)
            }
            ModelKind::ExplToLabel => {
                return Err(CliError::Usage(format!("{} holds no image classifier", path.display())));
            }
        };
        Ok(LabelModel { tokens, params, regions })
    }
}

fn regions_of<'a>(regions: &'a HashMap<String, RegionFeatureMatrix>, inst: &Instance) -> vte_core::Result<&'a RegionFeatureMatrix> {
    regions
        .get(&inst.image_id)
        .ok_or_else(|| Error::Data(format!("no features for image {}", inst.image_id)))
}

impl Predictor for LabelModel<'_> {
    fn predict(&self, inst: &Instance) -> vte_core::Result<Label> {
        let ids = self.tokens.ids(&inst.hypothesis_tokens());
        let tr = self.params.trace(&ids, regions_of(self.regions, inst)?.to_f64())?;
        Ok(predict_label(tr.probabilities().view()))
    }
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let test_original = load_split(&a.test_original, SplitName::Test)?;
    let test_corrected = load_split(&a.test_corrected, SplitName::Test)?;
    let store = FeatureStore::open(&a.features)?;
    let regions = load_regions(&store, &[&test_original, &test_corrected])?;
    let original = LabelModel::load(&a.original, &regions)?;
    let corrected = LabelModel::load(&a.corrected, &regions)?;
    let mut checkpoints: BTreeMap<SelectionSplit, &dyn Predictor> = BTreeMap::new();
    checkpoints.insert(SelectionSplit::Original, &original);
    checkpoints.insert(SelectionSplit::Corrected, &corrected);
    let report = evaluate_matrix(&checkpoints, &test_original, &test_corrected)?;
    print!("{}", report.to_table());
    if let Some(path) = &a.json {
        create_parent(path)?;
        write_json(path, &report)?;
    }
    Ok(())
}

pub fn generate(a: GenerateArgs) -> CliResult<()> {
    let model = JointModel::from_checkpoint(&Checkpoint::load(&a.checkpoint)?)?;
    let conditioned = model.params.decoder.config.condition_on_label;
    let classifier = match (&a.classifier, conditioned) {
        (Some(path), false) => Some(ExplToLabelModel::from_checkpoint(&Checkpoint::load(path)?)?),
        (None, false) => {
            return Err(CliError::Usage(
                "an unconditioned generator needs --classifier to label its explanations".into(),
            ))
        }
        (Some(_), true) => {
            log::warn!("--classifier is ignored for a label-conditioned generator");
            None
        }
        (None, true) => None,
    };
    let split = load_split(&a.split, a.name)?;
    let store = FeatureStore::open(&a.features)?;
    let regions = load_regions(&store, &[&split])?;

    let mut rows = Vec::with_capacity(split.len());
    let mut cm = ConfusionMatrix::default();
    for inst in split.instances() {
        let ids = model.tokens.ids(&inst.hypothesis_tokens());
        let out = model
            .params
            .explain(&ids, regions_of(&regions, inst)?.to_f64(), a.beam_width, a.max_len)?;
        let words = model.vocab.decode(out.hypothesis.tokens());
        let explanation = words.join(" ");
        let predicted = match &classifier {
            None => out.predicted,
            Some(c) => {
                let mut ids = c.vocab.encode(&tokenize(&explanation));
                // An immediately ended explanation carries no words; the
                // classifier then sees a single unknown token.
                if ids.is_empty() {
                    ids.push(c.vocab.id(UNK));
                }
                ExplToLabelTrainer::predict(&c.params, &ids)?
            }
        };
        cm.add(inst.label, predicted);
        rows.push(GeneratedExplanation {
            pair_id: inst.pair_id.clone(),
            predicted_label: predicted,
            explanation,
        });
    }
    create_parent(&a.out)?;
    write_generated(&a.out, &rows)?;
    println!("wrote {} explanations to {}", rows.len(), a.out.display());
    match balanced_accuracy(&cm) {
        Ok(b) => println!("balanced accuracy {:.2}%", 100.0 * b),
        Err(e) => log::warn!("balanced accuracy unavailable: {e}"),
    }
    Ok(())
}
