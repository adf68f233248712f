use std::collections::{BTreeMap, HashSet};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use vte_core::corpus::{compute_stats, merge_corrections, CorpusSplit, Instance, Label, SplitName};
use vte_core::explainer::{build_vocab, combined_loss, Vocab};
use vte_core::qc::{aggregate, redistribution_report, AnnotationRecord, Decision};
use vte_core::train::{balanced_accuracy, perplexity, ConfusionMatrix};
use vte_core::Result;

const WORDS: [&str; 8] = ["a", "dog", "runs", "the", "man", "red", "car", "sits"];

fn label() -> impl Strategy<Value = Label> {
    (0usize..3).prop_map(|i| Label::ALL[i])
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(0usize..WORDS.len(), 1..6).prop_map(|w| w.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" "))
}

fn record(pair: &str, worker: &str, label: Label) -> AnnotationRecord {
    AnnotationRecord {
        pair_id: pair.into(),
        worker_id: worker.into(),
        label,
        highlighted: [0].into(),
        explanation: format!("{worker} says {label}"),
        timestamp: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stats_match_brute_force(
        rows in prop::collection::vec((0usize..5, sentence(), label(), prop::collection::vec(sentence(), 0..3)), 0..25)
    ) {
        let inst: Vec<Instance> = rows
            .iter()
            .enumerate()
            .map(|(i, (img, hyp, l, ex))| {
                let mut x = Instance::new(format!("p{i}"), format!("img{img}"), hyp.clone(), *l);
                x.explanations = ex.clone();
                x
            })
            .collect();
        let split = CorpusSplit::new(SplitName::Validation, inst).unwrap();
        let s = compute_stats(&split);

        let mut counts = [0usize; 3];
        let mut images = HashSet::new();
        let mut words = HashSet::new();
        for (img, hyp, l, ex) in &rows {
            counts[l.index()] += 1;
            images.insert(*img);
            words.extend(hyp.split(' '));
            for e in ex {
                words.extend(e.split(' '));
            }
        }
        for l in Label::ALL {
            prop_assert_eq!(s.label_count(l), counts[l.index()]);
        }
        prop_assert_eq!(s.per_label_counts.values().sum::<usize>(), rows.len());
        prop_assert_eq!(s.n_images, images.len());
        prop_assert_eq!(s.vocabulary_size, words.len());
    }

    #[test]
    fn aggregate_is_permutation_invariant(a in label(), b in label(), c in label()) {
        let recs = [record("p", "w1", a), record("p", "w2", b), record("p", "w3", c)];
        let reference = aggregate("p", &recs).unwrap();
        for order in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let permuted: Vec<_> = order.iter().map(|&i| recs[i].clone()).collect();
            prop_assert_eq!(&aggregate("p", &permuted).unwrap(), &reference);
        }
    }

    #[test]
    fn redistribution_fractions_sum_to_one(labels in prop::collection::vec((label(), label(), label()), 1..60)) {
        let outcomes: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, &(a, b, c))| {
                let p = format!("p{i}");
                aggregate(&p, &[record(&p, "x", a), record(&p, "y", b), record(&p, "z", c)]).unwrap()
            })
            .collect();
        let r = redistribution_report(&outcomes, Label::Neutral).unwrap();
        let sum = Label::ALL.iter().map(|&l| r.majority_fraction(l)).sum::<num_rational::Ratio<usize>>() + r.ambiguous_fraction();
        prop_assert_eq!(sum, num_rational::Ratio::from_integer(1));

        let ambiguous = labels.iter().filter(|(a, b, c)| a != b && b != c && a != c).count();
        prop_assert_eq!(r.n_ambiguous, ambiguous);

        let base = CorpusSplit::new(
            SplitName::Validation,
            (0..labels.len()).map(|i| Instance::new(format!("p{i}"), "img", "a dog", Label::Neutral)).collect(),
        )
        .unwrap();
        let merged = merge_corrections(&base, &outcomes).unwrap();
        prop_assert_eq!(merged.len(), labels.len() - ambiguous);
        prop_assert!(merge_corrections(&merged, &outcomes).is_err());
    }

    #[test]
    fn balanced_accuracy_matches_brute_force_and_scales(
        counts in prop::array::uniform3(prop::array::uniform3(0u64..50)),
        factor in 1u64..20
    ) {
        let cm = ConfusionMatrix::new(counts);
        let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        match balanced_accuracy(&cm) {
            Ok(b) => {
                let oracle = (0..3).map(|i| counts[i][i] as f64 / rows[i] as f64).sum::<f64>() / 3.0;
                prop_assert!((b - oracle).abs() < 1e-12);
                prop_assert_eq!(balanced_accuracy(&cm.scaled(factor)).unwrap(), b);
            }
            Err(_) => prop_assert!(rows.contains(&0)),
        }
    }

    #[test]
    fn encoded_ids_stay_in_range(corpus in prop::collection::vec(prop::collection::vec("[a-e]{1,3}", 1..6), 1..20), probe in prop::collection::vec("[a-g]{1,3}", 0..10), min_count in 1usize..4) {
        let v = build_vocab(&corpus, min_count);
        prop_assert!(v.encode(&probe).iter().all(|&id| id < v.len()));
        for seq in &corpus {
            for t in seq {
                let id = v.id(t);
                prop_assert!(id == Vocab::UNK_ID || v.token(id) == Some(t.as_str()));
            }
        }
    }

    #[test]
    fn combined_loss_is_linear_in_alpha(l_label in 0.0f64..20.0, l_expl in 0.0f64..20.0) {
        prop_assert_eq!(combined_loss(l_label, l_expl, 0.0).unwrap().total, l_expl);
        prop_assert_eq!(combined_loss(l_label, l_expl, 1.0).unwrap().total, l_label);
        for alpha in [0.25, 0.5, 0.75] {
            let t = combined_loss(l_label, l_expl, alpha).unwrap().total;
            prop_assert!((t - (alpha * l_label + (1.0 - alpha) * l_expl)).abs() <= 1e-12 * (1.0 + l_label + l_expl));
        }
    }

    #[test]
    fn perplexity_is_monotone_in_token_probabilities(
        probs in prop::collection::vec(0.01f64..1.0, 4),
        boost in prop::collection::vec(0.0f64..1.0, 4)
    ) {
        let mut a = Instance::new("p0", "img", "a dog", Label::Entailment);
        a.explanations = vec!["the dog".into()];
        let mut b = Instance::new("p1", "img", "a man", Label::Neutral);
        b.explanations = vec!["a man".into()];
        let split = CorpusSplit::new(SplitName::Validation, vec![a, b]).unwrap();
        let vocab = build_vocab(&[vec!["the", "dog", "a", "man"]], 1);

        // Each instance scores three tokens (two words and END); the table
        // gives instance i's tokens probabilities from `probs` cyclically.
        let table = |p: Vec<f64>| {
            move |inst: &Instance, reference: &[usize]| -> Result<Vec<f64>> {
                let off = if inst.pair_id == "p0" { 0 } else { 2 };
                Ok((0..=reference.len()).map(|t| -p[(off + t) % 4].ln()).collect())
            }
        };
        let higher: Vec<f64> = probs.iter().zip(&boost).map(|(p, b)| p + b * (1.0 - p)).collect();
        let before = perplexity(&table(probs.clone()), &split, &vocab).unwrap();
        let after = perplexity(&table(higher), &split, &vocab).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-12));
    }
}

#[test]
fn perplexity_hand_computed() {
    let mut a = Instance::new("p0", "img", "a dog", Label::Entailment);
    a.explanations = vec!["dog".into()];
    let mut b = Instance::new("p1", "img", "a man", Label::Neutral);
    b.explanations = vec!["a man".into()];
    let split = CorpusSplit::new(SplitName::Validation, vec![a, b]).unwrap();
    let vocab = build_vocab(&[vec!["dog", "a", "man"]], 1);
    let probs: BTreeMap<&str, Vec<f64>> = [("p0", vec![0.5, 0.25]), ("p1", vec![0.1, 0.2, 0.4])].into();
    let model = |inst: &Instance, _: &[usize]| -> Result<Vec<f64>> {
        Ok(probs[inst.pair_id.as_str()].iter().map(|p| -p.ln()).collect())
    };
    let expected = (0.5f64 * 0.25 * 0.1 * 0.2 * 0.4).powf(-1.0 / 5.0);
    assert!((perplexity(&model, &split, &vocab).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn ambiguous_merge_drops_only_ambiguous_pairs() {
    let base = CorpusSplit::new(
        SplitName::Test,
        (0..6).map(|i| Instance::new(format!("p{i}"), "img", "a dog", Label::Neutral)).collect(),
    )
    .unwrap();
    use Label::*;
    let votes = [(Entailment, Entailment, Neutral), (Entailment, Neutral, Contradiction), (Contradiction, Contradiction, Contradiction)];
    let outcomes: Vec<_> = votes
        .iter()
        .enumerate()
        .map(|(i, &(a, b, c))| {
            let p = format!("p{i}");
            aggregate(&p, &[record(&p, "x", a), record(&p, "y", b), record(&p, "z", c)]).unwrap()
        })
        .collect();
    assert_eq!(outcomes[1].decision, Decision::Ambiguous);
    let merged = merge_corrections(&base, &outcomes).unwrap();
    let ids: Vec<_> = merged.instances().iter().map(|i| i.pair_id.as_str()).collect();
    assert_eq!(ids, ["p0", "p2", "p3", "p4", "p5"]);
    assert_eq!(merged.get("p0").unwrap().label, Entailment);
    assert_eq!(merged.get("p0").unwrap().explanations.len(), 2);
}
