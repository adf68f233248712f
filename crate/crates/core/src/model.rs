//! Bottom-up/top-down attention classifier.
//!
//! ```text
//! tokens ──embed──▶ GRU ──▶ h ─────────────┐
//!                          │                ▼
//! regions v₁..v_K ──attend(h)──▶ context ──fuse──▶ f ──MLP──▶ p(label)
//! ```
//!
//! * attention scores `sᵢ = w₂ᵀ tanh(W₁ [vᵢ; h])`, weights `softmax(s)`,
//!   context `Σ weightᵢ vᵢ`;
//! * fusion `f = tanh(W_v context) ⊙ tanh(W_h h)`;
//! * classifier: one tanh hidden layer of `H` units, then softmax over the
//!   three labels.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, Label};
use crate::features::{EmbeddingTable, RegionFeatureMatrix, DEFAULT_FEATURE_DIM};
use crate::impl_params;
use crate::nn::{add_outer, argmax, log_softmax, softmax, xavier_uniform, Gru, GruTrace, Linear};
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 512;
pub const DEFAULT_EMBED_DIM: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ButdConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub attention_dim: usize,
    /// Leave the embedding rows untouched during training.
    pub freeze_embeddings: bool,
}

impl Default for ButdConfig {
    fn default() -> Self {
        ButdConfig {
            embed_dim: DEFAULT_EMBED_DIM,
            hidden: DEFAULT_HIDDEN,
            feature_dim: DEFAULT_FEATURE_DIM,
            attention_dim: DEFAULT_HIDDEN,
            freeze_embeddings: true,
        }
    }
}

impl ButdConfig {
    pub fn small(embed_dim: usize, hidden: usize, feature_dim: usize) -> Self {
        ButdConfig {
            embed_dim,
            hidden,
            feature_dim,
            attention_dim: hidden,
            freeze_embeddings: true,
        }
    }
}

/// Maps hypothesis tokens to embedding rows; row 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenIndex {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenIndex {
    pub const UNKNOWN_ROW: usize = 0;

    /// `tokens` become rows 1..; row 0 is reserved for unknown tokens.
    pub fn new<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut list = vec![String::new()];
        let mut index = HashMap::new();
        for t in tokens {
            if !index.contains_key(&t) {
                index.insert(t.clone(), list.len());
                list.push(t);
            }
        }
        TokenIndex { tokens: list, index }
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNKNOWN_ROW)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Known tokens in row order (the unknown row excluded).
    pub fn known_tokens(&self) -> &[String] {
        &self.tokens[1..]
    }
}

/// Final recurrent output for a hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisEncoding(pub Array1<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult {
    pub weights: Array1<f64>,
    pub context: Array1<f64>,
}

/// Multimodal vector feeding the classifier and the explanation decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRepresentation(pub Array1<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ButdParams {
    pub embedding: Array2<f64>,
    pub encoder: Gru,
    /// `W₁`, acting on the concatenation `[vᵢ; h]`.
    pub att_proj: Array2<f64>,
    /// `w₂`.
    pub att_score: Array1<f64>,
    pub fuse_v: Array2<f64>,
    pub fuse_h: Array2<f64>,
    pub cls_hidden: Linear,
    pub cls_out: Linear,
}

impl_params!(ButdParams {
    embedding,
    encoder,
    att_proj,
    att_score,
    fuse_v,
    fuse_h,
    cls_hidden,
    cls_out,
});

impl ButdParams {
    pub fn zeros(config: &ButdConfig, vocab_rows: usize) -> Self {
        let ButdConfig {
            embed_dim: e,
            hidden: h,
            feature_dim: d,
            attention_dim: a,
            ..
        } = *config;
        ButdParams {
            embedding: Array2::zeros((vocab_rows, e)),
            encoder: Gru::zeros(e, h),
            att_proj: Array2::zeros((a, d + h)),
            att_score: Array1::zeros(a),
            fuse_v: Array2::zeros((h, d)),
            fuse_h: Array2::zeros((h, h)),
            cls_hidden: Linear::zeros(h, h),
            cls_out: Linear::zeros(Label::ALL.len(), h),
        }
    }

    /// Seeded initialization; embedding rows are copied from `table`.
    pub fn init(config: &ButdConfig, tokens: &TokenIndex, table: &EmbeddingTable, seed: u64) -> Result<Self> {
        if table.dim() != config.embed_dim {
            return Err(Error::Shape(format!(
                "embedding table has {} dims, model expects {}",
                table.dim(),
                config.embed_dim
            )));
        }
        let ButdConfig {
            embed_dim: e,
            hidden: h,
            feature_dim: d,
            attention_dim: a,
            ..
        } = *config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embedding = Array2::zeros((tokens.rows(), e));
        embedding.row_mut(TokenIndex::UNKNOWN_ROW).assign(table.unknown());
        for (i, t) in tokens.known_tokens().iter().enumerate() {
            embedding.row_mut(i + 1).assign(table.lookup(t));
        }
        let att_score = xavier_uniform(1, a, &mut rng).row(0).to_owned();
        Ok(ButdParams {
            embedding,
            encoder: Gru::init(e, h, &mut rng),
            att_proj: xavier_uniform(a, d + h, &mut rng),
            att_score,
            fuse_v: xavier_uniform(h, d, &mut rng),
            fuse_h: xavier_uniform(h, h, &mut rng),
            cls_hidden: Linear::init(h, h, &mut rng),
            cls_out: Linear::init(Label::ALL.len(), h, &mut rng),
        })
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden()
    }

    pub fn feature_dim(&self) -> usize {
        self.fuse_v.ncols()
    }

    pub fn embed_ids(&self, ids: &[usize]) -> Vec<Array1<f64>> {
        ids.iter().map(|&i| self.embedding.row(i).to_owned()).collect()
    }
}

pub fn encode_hypothesis(embeddings: &[Array1<f64>], params: &ButdParams) -> Result<HypothesisEncoding> {
    if embeddings.is_empty() {
        return Err(Error::Argument("cannot encode an empty hypothesis".into()));
    }
    let e = params.encoder.input();
    if let Some(bad) = embeddings.iter().find(|x| x.len() != e) {
        return Err(Error::Shape(format!("token vector has {} dims, encoder expects {e}", bad.len())));
    }
    Ok(HypothesisEncoding(params.encoder.forward(embeddings).last().clone()))
}

fn check_regions(regions: ArrayView2<f64>, h: &HypothesisEncoding, params: &ButdParams) -> Result<()> {
    if regions.nrows() == 0 {
        return Err(Error::Shape("no regions to attend over".into()));
    }
    if regions.ncols() != params.feature_dim() {
        return Err(Error::Shape(format!(
            "regions have {} dims, model expects {}",
            regions.ncols(),
            params.feature_dim()
        )));
    }
    if h.0.len() != params.hidden() {
        return Err(Error::Shape(format!(
            "hypothesis encoding has {} dims, model expects {}",
            h.0.len(),
            params.hidden()
        )));
    }
    Ok(())
}

/// Returns the pre-softmax scores and the tanh activations `tanh(W₁[vᵢ; h])`.
fn attention_scores(regions: ArrayView2<f64>, h: ArrayView1<f64>, params: &ButdParams) -> (Array1<f64>, Array2<f64>) {
    let d = regions.ncols();
    let w_region = params.att_proj.slice(s![.., ..d]);
    let w_hyp = params.att_proj.slice(s![.., d..]);
    let from_h = w_hyp.dot(&h);
    let mut act = regions.dot(&w_region.t());
    act += &from_h.view().insert_axis(Axis(0));
    act.mapv_inplace(f64::tanh);
    let scores = act.dot(&params.att_score);
    (scores, act)
}

pub fn attend(regions: ArrayView2<f64>, h: &HypothesisEncoding, params: &ButdParams) -> Result<AttentionResult> {
    check_regions(regions, h, params)?;
    let (scores, _) = attention_scores(regions, h.0.view(), params);
    let weights = softmax(scores.view());
    let context = regions.t().dot(&weights);
    Ok(AttentionResult { weights, context })
}

pub fn fuse(context: ArrayView1<f64>, h: &HypothesisEncoding, params: &ButdParams) -> Result<FusedRepresentation> {
    if context.len() != params.feature_dim() || h.0.len() != params.hidden() {
        return Err(Error::Shape(format!(
            "fusion expects context {} / hypothesis {}, got {} / {}",
            params.feature_dim(),
            params.hidden(),
            context.len(),
            h.0.len()
        )));
    }
    let tv = params.fuse_v.dot(&context).mapv(f64::tanh);
    let th = params.fuse_h.dot(&h.0).mapv(f64::tanh);
    Ok(FusedRepresentation(tv * th))
}

pub fn classifier_logits(f: &FusedRepresentation, params: &ButdParams) -> Array1<f64> {
    let hidden = params.cls_hidden.forward(f.0.view()).mapv(f64::tanh);
    params.cls_out.forward(hidden.view())
}

/// Probabilities over labels in [`Label::ALL`] order.
pub fn classify(f: &FusedRepresentation, params: &ButdParams) -> Array1<f64> {
    softmax(classifier_logits(f, params).view())
}

/// Most probable label; ties go to the lowest label index.
pub fn predict_label(probs: ArrayView1<f64>) -> Label {
    Label::from_index(argmax(probs)).expect("three-way distribution")
}

/// A classifier together with the token index it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ButdModel {
    pub config: ButdConfig,
    pub tokens: TokenIndex,
    pub params: ButdParams,
}

impl ButdModel {
    pub fn new(config: ButdConfig, table: &EmbeddingTable, seed: u64) -> Result<Self> {
        let tokens = TokenIndex::new(table.tokens().into_iter().map(str::to_string));
        let params = ButdParams::init(&config, &tokens, table, seed)?;
        Ok(ButdModel { config, tokens, params })
    }

    pub fn token_ids(&self, instance: &Instance) -> Vec<usize> {
        self.tokens.ids(&instance.hypothesis_tokens())
    }
}

/// Full composition embed → encode → attend → fuse → classify.
pub fn forward(
    instance: &Instance,
    features: &RegionFeatureMatrix,
    model: &ButdModel,
) -> Result<(Array1<f64>, FusedRepresentation)> {
    if features.image_id != instance.image_id {
        return Err(Error::Argument(format!(
            "features belong to image {:?} but instance {} uses {:?}",
            features.image_id, instance.pair_id, instance.image_id
        )));
    }
    let ids = model.token_ids(instance);
    let embedded = model.params.embed_ids(&ids);
    let h = encode_hypothesis(&embedded, &model.params)?;
    let regions = features.to_f64();
    let att = attend(regions.view(), &h, &model.params)?;
    let f = fuse(att.context.view(), &h, &model.params)?;
    Ok((classify(&f, &model.params), f))
}

/// Forward intermediates kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ButdTrace {
    ids: Vec<usize>,
    gru: GruTrace,
    regions: Array2<f64>,
    att_act: Array2<f64>,
    pub attention: AttentionResult,
    tanh_v: Array1<f64>,
    tanh_h: Array1<f64>,
    pub fused: FusedRepresentation,
    cls_act: Array1<f64>,
    pub logits: Array1<f64>,
}

impl ButdTrace {
    pub fn hypothesis(&self) -> &Array1<f64> {
        self.gru.last()
    }

    pub fn probabilities(&self) -> Array1<f64> {
        softmax(self.logits.view())
    }

    /// `−ln p(label)`.
    pub fn cross_entropy(&self, label: Label) -> f64 {
        -log_softmax(self.logits.view())[label.index()]
    }

    /// Gradient of [`Self::cross_entropy`] with respect to the logits.
    pub fn cross_entropy_grad(&self, label: Label) -> Array1<f64> {
        let mut g = self.probabilities();
        g[label.index()] -= 1.0;
        g
    }
}

impl ButdParams {
    pub fn trace(&self, ids: &[usize], regions: Array2<f64>) -> Result<ButdTrace> {
        if ids.is_empty() {
            return Err(Error::Argument("cannot encode an empty hypothesis".into()));
        }
        let embedded = self.embed_ids(ids);
        let gru = self.encoder.forward(&embedded);
        let h = HypothesisEncoding(gru.last().clone());
        check_regions(regions.view(), &h, self)?;
        let (scores, att_act) = attention_scores(regions.view(), h.0.view(), self);
        let weights = softmax(scores.view());
        let context = regions.t().dot(&weights);
        let tanh_v = self.fuse_v.dot(&context).mapv(f64::tanh);
        let tanh_h = self.fuse_h.dot(&h.0).mapv(f64::tanh);
        let fused = FusedRepresentation(&tanh_v * &tanh_h);
        let cls_act = self.cls_hidden.forward(fused.0.view()).mapv(f64::tanh);
        let logits = self.cls_out.forward(cls_act.view());
        Ok(ButdTrace {
            ids: ids.to_vec(),
            gru,
            regions,
            att_act,
            attention: AttentionResult { weights, context },
            tanh_v,
            tanh_h,
            fused,
            cls_act,
            logits,
        })
    }

    /// Accumulates gradients for upstream `d_logits` plus an optional extra
    /// gradient arriving at the fused vector (from the explanation decoder).
    pub fn backward(&self, trace: &ButdTrace, d_logits: &Array1<f64>, d_fused_extra: Option<&Array1<f64>>, grad: &mut ButdParams) {
        let d_cls_act = self.cls_out.backward(trace.cls_act.view(), d_logits.view(), &mut grad.cls_out);
        let d_cls_pre = d_cls_act * &(1.0 - &(&trace.cls_act * &trace.cls_act));
        let mut d_fused = self.cls_hidden.backward(trace.fused.0.view(), d_cls_pre.view(), &mut grad.cls_hidden);
        if let Some(extra) = d_fused_extra {
            d_fused += extra;
        }
        self.backward_from_fused(trace, &d_fused, grad);
    }

    /// Backpropagates a gradient on the fused vector only.
    pub fn backward_from_fused(&self, trace: &ButdTrace, d_fused: &Array1<f64>, grad: &mut ButdParams) {
        let h = trace.gru.last();
        let context = &trace.attention.context;

        let d_pv = d_fused * &trace.tanh_h * &(1.0 - &(&trace.tanh_v * &trace.tanh_v));
        let d_ph = d_fused * &trace.tanh_v * &(1.0 - &(&trace.tanh_h * &trace.tanh_h));
        add_outer(&mut grad.fuse_v, d_pv.view(), context.view());
        add_outer(&mut grad.fuse_h, d_ph.view(), h.view());
        let d_context = self.fuse_v.t().dot(&d_pv);
        let mut d_h = self.fuse_h.t().dot(&d_ph);

        // context = Σ wᵢ vᵢ, w = softmax(s)
        let weights = &trace.attention.weights;
        let d_w = trace.regions.dot(&d_context);
        let mean = weights.dot(&d_w);
        let d_scores = weights * &(d_w - mean);

        // sᵢ = w₂ · tanh(W₁ [vᵢ; h])
        let d = trace.regions.ncols();
        grad.att_score += &trace.att_act.t().dot(&d_scores);
        let d_act = d_scores.view().insert_axis(Axis(1)).to_owned() * &self.att_score.view().insert_axis(Axis(0));
        let d_pre = d_act * &(1.0 - &(&trace.att_act * &trace.att_act));
        {
            let mut gw_region = grad.att_proj.slice_mut(s![.., ..d]);
            gw_region += &d_pre.t().dot(&trace.regions);
        }
        let d_pre_sum = d_pre.sum_axis(Axis(0));
        {
            let mut gw_hyp = grad.att_proj.slice_mut(s![.., d..]);
            for (mut row, &g) in gw_hyp.rows_mut().into_iter().zip(d_pre_sum.iter()) {
                row.scaled_add(g, h);
            }
        }
        d_h += &self.att_proj.slice(s![.., d..]).t().dot(&d_pre_sum);

        let d_embedded = self.encoder.backward_last(&trace.gru, &d_h, &mut grad.encoder);
        for (&id, dx) in trace.ids.iter().zip(&d_embedded) {
            let mut row = grad.embedding.row_mut(id);
            row += dx;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::synth_features;
    use crate::nn::{fill, gradcheck, zeros_like};
    use rand::Rng;

    fn small_model(seed: u64) -> ButdModel {
        let table = EmbeddingTable::random(["a", "dog", "runs", "on", "grass"], 8, seed).unwrap();
        ButdModel::new(ButdConfig::small(8, 8, 8), &table, seed).unwrap()
    }

    #[test]
    fn default_encoding_has_512_dims() {
        let table = EmbeddingTable::random(["x"], DEFAULT_EMBED_DIM, 0).unwrap();
        let model = ButdModel::new(ButdConfig::default(), &table, 0).unwrap();
        let emb: Vec<_> = (0..7).map(|_| table.lookup("x").clone()).collect();
        assert_eq!(encode_hypothesis(&emb, &model.params).unwrap().0.len(), 512);
    }

    #[test]
    fn single_token_is_one_cell_update() {
        let m = small_model(1);
        let x = m.params.embedding.row(2).to_owned();
        let h = encode_hypothesis(std::slice::from_ref(&x), &m.params).unwrap();
        let manual = m.params.encoder.cell(x.view(), Array1::zeros(8).view());
        assert_eq!(h.0, manual);
        assert!(encode_hypothesis(&[], &m.params).is_err());
    }

    #[test]
    fn uniform_attention_when_scores_equal() {
        let mut m = small_model(2);
        m.params.att_score.fill(0.0);
        let regions = synth_features("i", 4, 3, 8).unwrap().to_f64();
        let h = HypothesisEncoding(Array1::from_elem(8, 0.3));
        let att = attend(regions.view(), &h, &m.params).unwrap();
        for w in att.weights.iter() {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        let mean = regions.mean_axis(Axis(0)).unwrap();
        for (a, b) in att.context.iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_region_gets_all_weight() {
        let m = small_model(3);
        let regions = synth_features("i", 5, 1, 8).unwrap().to_f64();
        let h = HypothesisEncoding(Array1::from_elem(8, -0.1));
        let att = attend(regions.view(), &h, &m.params).unwrap();
        assert_eq!(att.weights.len(), 1);
        assert!((att.weights[0] - 1.0).abs() < 1e-15);
        assert_eq!(att.context, regions.row(0).to_owned());
    }

    #[test]
    fn attention_shape_errors() {
        let m = small_model(3);
        let regions = synth_features("i", 5, 2, 5).unwrap().to_f64();
        let h = HypothesisEncoding(Array1::zeros(8));
        assert!(matches!(attend(regions.view(), &h, &m.params), Err(Error::Shape(_))));
        let h_bad = HypothesisEncoding(Array1::zeros(3));
        let regions = synth_features("i", 5, 2, 8).unwrap().to_f64();
        assert!(matches!(attend(regions.view(), &h_bad, &m.params), Err(Error::Shape(_))));
    }

    #[test]
    fn fusion_identities() {
        let mut m = small_model(4);
        let h = HypothesisEncoding(Array1::from_elem(8, 0.7));
        let ctx = Array1::from_elem(8, -0.4);
        let mut zeroed = m.params.clone();
        zeroed.fuse_v.fill(0.0);
        zeroed.fuse_h.fill(0.0);
        assert!(fuse(ctx.view(), &h, &zeroed).unwrap().0.iter().all(|&x| x == 0.0));

        // identical projections u: f = tanh(u)²
        m.params.fuse_v = Array2::eye(8);
        m.params.fuse_h = Array2::eye(8);
        let u = Array1::from_shape_fn(8, |i| i as f64 * 0.1 - 0.3);
        let f = fuse(u.view(), &HypothesisEncoding(u.clone()), &m.params).unwrap();
        for (fi, ui) in f.0.iter().zip(u.iter()) {
            assert!((fi - ui.tanh().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_classifier_is_uniform_and_ties_pick_entailment() {
        let mut m = small_model(5);
        fill(&mut m.params.cls_hidden, 0.0);
        fill(&mut m.params.cls_out, 0.0);
        let p = classify(&FusedRepresentation(Array1::from_elem(8, 0.5)), &m.params);
        for x in p.iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(predict_label(p.view()), Label::Entailment);
        let tie = Array1::from(vec![0.4, 0.4, 0.2]);
        assert_eq!(predict_label(tie.view()), Label::Entailment);
    }

    #[test]
    fn forward_is_the_composition() {
        let m = small_model(0);
        let inst = Instance::new("p", "img", "A dog runs on grass", Label::Entailment);
        let feats = synth_features("img", 9, 3, 8).unwrap();
        let (p, f) = forward(&inst, &feats, &m).unwrap();

        let table = EmbeddingTable::random(["a", "dog", "runs", "on", "grass"], 8, 0).unwrap();
        let emb = crate::features::embed_tokens(&inst.hypothesis_tokens(), &table).unwrap();
        let h = encode_hypothesis(&emb, &m.params).unwrap();
        let att = attend(feats.to_f64().view(), &h, &m.params).unwrap();
        let f2 = fuse(att.context.view(), &h, &m.params).unwrap();
        assert_eq!(f, f2);
        assert_eq!(p, classify(&f2, &m.params));

        let other = synth_features("elsewhere", 9, 3, 8).unwrap();
        assert!(matches!(forward(&inst, &other, &m), Err(Error::Argument(_))));
    }

    #[test]
    fn trace_agrees_with_component_path() {
        let m = small_model(7);
        let inst = Instance::new("p", "img", "a dog", Label::Neutral);
        let feats = synth_features("img", 3, 3, 8).unwrap();
        let (p, f) = forward(&inst, &feats, &m).unwrap();
        let tr = m.params.trace(&m.token_ids(&inst), feats.to_f64()).unwrap();
        assert_eq!(tr.fused, f);
        for (a, b) in tr.probabilities().iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let m = small_model(11);
        let ids = vec![1, 2, 0, 4];
        let regions = synth_features("i", 12, 3, 8).unwrap().to_f64();
        let label = Label::Contradiction;
        let tr = m.params.trace(&ids, regions.clone()).unwrap();
        let mut grad = zeros_like(&m.params);
        m.params.backward(&tr, &tr.cross_entropy_grad(label), None, &mut grad);
        let r = gradcheck::check(&m.params, &grad, gradcheck::DEFAULT_STEP, gradcheck::DEFAULT_FLOOR, |p| {
            p.trace(&ids, regions.clone()).unwrap().cross_entropy(label)
        });
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn region_permutation_permutes_weights() {
        let m = small_model(13);
        let regions = synth_features("i", 14, 4, 8).unwrap().to_f64();
        let h = HypothesisEncoding(Array1::from_shape_fn(8, |_| rand::rng().random_range(-1.0..1.0)));
        let perm = [2usize, 0, 3, 1];
        let permuted = regions.select(Axis(0), &perm);
        let a = attend(regions.view(), &h, &m.params).unwrap();
        let b = attend(permuted.view(), &h, &m.params).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert!((b.weights[j] - a.weights[i]).abs() < 1e-12);
        }
        for (x, y) in a.context.iter().zip(b.context.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
