//! Seeded toy corpora whose labels follow simple, learnable rules.
//!
//! The entailment corpus pairs region features built from object
//! prototypes with hypotheses naming one object: the label is entailment
//! when that object is pictured, contradiction when its incompatible
//! partner is pictured instead, and neutral otherwise. The explanation
//! corpus fills label-specific sentence templates with nouns and verbs.

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{CorpusSplit, Instance, Label, SplitName};
use crate::features::RegionFeatureMatrix;
use crate::{Error, Result};

/// Objects come in incompatible pairs `(2i, 2i + 1)`.
pub const OBJECTS: [&str; 6] = ["dog", "cat", "car", "bicycle", "man", "woman"];

const HYPOTHESIS_TEMPLATES: [&str; 3] = ["there is a {} here", "a {} is in the picture", "the photo shows a {}"];

fn partner(obj: usize) -> usize {
    obj ^ 1
}

#[derive(Debug, Clone)]
pub struct SyntheticVte {
    pub split: CorpusSplit,
    pub features: Vec<RegionFeatureMatrix>,
    pub prototypes: Array2<f64>,
}

/// `n` instances with `regions` regions of `dim` features each; labels
/// cycle through E, N, C so every class is present.
pub fn entailment_corpus(name: SplitName, n: usize, regions: usize, dim: usize, seed: u64) -> Result<SyntheticVte> {
    if regions < 2 || regions > OBJECTS.len() - 2 || dim == 0 {
        return Err(Error::Argument(format!(
            "synthetic corpus needs 2..={} regions and a positive dimension",
            OBJECTS.len() - 2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes = Array2::from_shape_fn((OBJECTS.len(), dim), |_| rng.sample::<f64, _>(StandardNormal));
    let mut instances = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for i in 0..n {
        let label = Label::ALL[i % 3];
        let obj = rng.random_range(0..OBJECTS.len());
        let others: Vec<usize> = (0..OBJECTS.len()).filter(|&o| o != obj && o != partner(obj)).collect();
        let mut pictured = match label {
            Label::Entailment => vec![obj],
            Label::Contradiction => vec![partner(obj)],
            Label::Neutral => Vec::new(),
        };
        let fill: Vec<usize> = others.choose_multiple(&mut rng, regions - pictured.len()).copied().collect();
        pictured.extend(fill);
        pictured.shuffle(&mut rng);

        let m = Array2::from_shape_fn((regions, dim), |(r, d)| {
            let noise: f64 = rng.sample(StandardNormal);
            (prototypes[[pictured[r], d]] + 0.1 * noise) as f32
        });
        let image_id = format!("img{i:04}");
        features.push(RegionFeatureMatrix::new(image_id.clone(), m)?);
        let template = HYPOTHESIS_TEMPLATES[rng.random_range(0..HYPOTHESIS_TEMPLATES.len())];
        instances.push(Instance::new(format!("pair{i:04}"), image_id, template.replace("{}", OBJECTS[obj]), label));
    }
    Ok(SyntheticVte {
        split: CorpusSplit::new(name, instances)?,
        features,
        prototypes,
    })
}

/// Every token used by [`entailment_corpus`] hypotheses.
pub fn hypothesis_vocabulary() -> Vec<String> {
    let mut v: Vec<String> = HYPOTHESIS_TEMPLATES
        .iter()
        .flat_map(|t| t.split_whitespace())
        .filter(|w| *w != "{}")
        .chain(OBJECTS)
        .map(str::to_string)
        .collect();
    v.sort();
    v.dedup();
    v
}

pub const TRAIN_NOUNS: [&str; 8] = ["dog", "cat", "man", "woman", "child", "horse", "girl", "boy"];
pub const HELD_OUT_NOUNS: [&str; 4] = ["bird", "player", "cyclist", "puppy"];
pub const VERBS: [&str; 6] = ["running", "sitting", "sleeping", "eating", "jumping", "swimming"];

const EXPLANATION_TEMPLATES: [(Label, &str); 9] = [
    (Label::Entailment, "the {n} is {v}"),
    (Label::Entailment, "there is a {n} {v}"),
    (Label::Entailment, "a {n} is {v} so the {n} is there"),
    (Label::Contradiction, "there is no {n}"),
    (Label::Contradiction, "the {n} is not {v}"),
    (Label::Contradiction, "a {n} cannot be {v} and still at once"),
    (Label::Neutral, "the {n} might be {v}"),
    (Label::Neutral, "not every {n} is {v}"),
    (Label::Neutral, "we do not know if the {n} is {v}"),
];

/// `n` templated explanations with their labels; `held_out` draws nouns
/// from a pool disjoint from the training pool.
pub fn templated_explanations(n: usize, seed: u64, held_out: bool) -> Vec<(String, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nouns: &[&str] = if held_out { &HELD_OUT_NOUNS } else { &TRAIN_NOUNS };
    (0..n)
        .map(|i| {
            let label = Label::ALL[i % 3];
            let choices: Vec<&str> = EXPLANATION_TEMPLATES
                .iter()
                .filter(|(l, _)| *l == label)
                .map(|(_, t)| *t)
                .collect();
            let t = choices[rng.random_range(0..choices.len())];
            let noun = nouns[rng.random_range(0..nouns.len())];
            let verb = VERBS[rng.random_range(0..VERBS.len())];
            (t.replace("{n}", noun).replace("{v}", verb), label)
        })
        .collect()
}

/// Attaches one templated explanation per instance, matching its label.
pub fn with_explanations(split: &CorpusSplit, seed: u64) -> Result<CorpusSplit> {
    let mut inst = split.instances().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in inst.iter_mut() {
        let noun = x.hypothesis_tokens().into_iter().find(|t| OBJECTS.contains(&t.as_str())).unwrap_or_default();
        let options = match x.label {
            Label::Entailment => ["there is a {n} in the picture", "the {n} is visible"],
            Label::Neutral => ["the picture may not show a {n}", "a {n} might be elsewhere"],
            Label::Contradiction => ["there is no {n} in the picture", "the {n} is not visible"],
        };
        let template = options[rng.random_range(0..options.len())];
        x.explanations = vec![template.replace("{n}", &noun)];
    }
    CorpusSplit::new(split.name, inst)
}
