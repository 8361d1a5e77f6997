use std::collections::BTreeSet;

use hiram_core::bag::SelectiveHead;
use hiram_core::corpus::{
    derive_hierarchy, relative_distances, BagKey, EntityMention, RawRecord, SentenceInstance, Span, TypeInventory, BLANK,
};
use hiram_core::metrics::{hits_at_k, pr_auc, PredictionRecord};
use hiram_core::optim::adadelta_step;
use hiram_core::synth::SynthSpec;
use hiram_core::trainer::{apply_dropout, Mode};
use hiram_core::{Graph, ModelConfig, ParamSet, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn softmax(x: &[f64]) -> Vec<f64> {
    let mut g = Graph::new();
    let n = g.leaf(Tensor::vector(x.to_vec()));
    let s = g.softmax(n).unwrap();
    g.value(s).data().to_vec()
}

fn records(scores: &[Vec<f64>], golds: &[usize]) -> Vec<PredictionRecord> {
    scores
        .iter()
        .zip(golds)
        .enumerate()
        .map(|(i, (s, &gold))| PredictionRecord {
            key: BagKey {
                subject: format!("s{i}"),
                object: format!("o{i}"),
                relation: String::new(),
            },
            gold,
            scores: s.clone(),
        })
        .collect()
}

fn bag_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (1usize..6, 2usize..5).prop_flat_map(|(bags, rel)| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, rel), bags),
            prop::collection::vec(0..=rel, bags),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmax_sums_to_one(x in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax(&x);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn softmax_shift_invariant(x in prop::collection::vec(-20.0f64..20.0, 1..8), c in -100.0f64..100.0) {
        let a = softmax(&x);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let b = softmax(&shifted);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selective_attention_is_permutation_invariant(
        reps in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 1..5),
        seed in 0u64..1000,
        rot in 0usize..5,
    ) {
        let cfg = ModelConfig { filters: 2, ..ModelConfig::default() };
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = SelectiveHead::new(&cfg, 0, 3, &mut params, &mut rng);
        let run = |order: &[Vec<f64>]| {
            let mut g = Graph::new();
            let p = params.register(&mut g);
            let ids: Vec<_> = order.iter().map(|r| g.leaf(Tensor::vector(r.clone()))).collect();
            let (b, alpha) = head.attend(&mut g, &p, &ids, 1).unwrap();
            (g.value(b).data().to_vec(), g.value(alpha).sum())
        };
        let (b, total) = run(&reps);
        prop_assert!((total - 1.0).abs() < 1e-9);
        let mut rotated = reps.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let (b2, _) = run(&rotated);
        for (u, v) in b.iter().zip(&b2) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_invariant_under_monotone_map((scores, golds) in bag_strategy()) {
        let recs = records(&scores, &golds);
        prop_assume!(recs.iter().any(|r| r.gold != 0));
        let mapped: Vec<Vec<f64>> = scores.iter().map(|s| s.iter().map(|v| 1.0 / (1.0 + (-3.0 * v).exp())).collect()).collect();
        let a = pr_auc(&recs).unwrap();
        let b = pr_auc(&records(&mapped, &golds)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn hits_monotone_in_k((scores, golds) in bag_strategy()) {
        let recs = records(&scores, &golds);
        let rel = scores[0].len();
        let tail: BTreeSet<usize> = (1..=rel).collect();
        prop_assume!(recs.iter().any(|r| r.gold != 0));
        let mut prev = 0.0;
        for k in 1..=rel {
            let h = hits_at_k(&recs, k, &tail).unwrap();
            prop_assert!(h >= prev);
            prev = h;
        }
        prop_assert!((prev - 100.0).abs() < 1e-9);
    }

    #[test]
    fn hierarchy_is_prefix_chain(segs in prop::collection::vec("[a-z]{1,4}", 3..6), m in 1usize..3) {
        let label = format!("/{}", segs.join("/"));
        let anc = derive_hierarchy(&label, m).unwrap();
        prop_assert_eq!(anc.len(), m);
        let mut finer = label.clone();
        for a in &anc {
            let prefix = format!("{a}/");
            prop_assert!(finer.starts_with(&prefix));
            finer = a.clone();
        }
    }

    #[test]
    fn type_lists_have_fixed_width(
        mentions in prop::collection::vec("/[a-z]{1,3}/[a-z]{1,3}", 0..7),
        k in 1usize..5,
    ) {
        let mut inv = TypeInventory::new(k);
        inv.insert("e", &mentions);
        let got = inv.get("e");
        prop_assert_eq!(got.len(), k);
        let real = mentions.len().min(k);
        prop_assert!(got[..real].iter().all(|t| t != BLANK));
        prop_assert!(got[real..].iter().all(|t| t == BLANK));
        prop_assert_eq!(inv.get("missing"), vec![BLANK.to_string(); k]);
    }

    #[test]
    fn distances_are_zero_on_mentions(n in 3usize..20, h in 0usize..20, t in 0usize..20, clip in 1usize..6) {
        prop_assume!(h < n && t < n && h != t);
        let inst = SentenceInstance {
            tokens: (0..n).map(|i| format!("w{i}")).collect(),
            head: Span::new(h, h + 1),
            tail: Span::new(t, t + 1),
            relation: "/a/b".into(),
        };
        let (dh, dt) = relative_distances(&inst, clip);
        prop_assert_eq!(dh.len(), n);
        prop_assert_eq!(dh[h], 0);
        prop_assert_eq!(dt[t], 0);
        prop_assert!(dh.iter().chain(&dt).all(|d| d.unsigned_abs() as usize <= clip));
    }

    #[test]
    fn dropout_keeps_or_scales(x in prop::collection::vec(-5.0f64..5.0, 1..50), p in 0.0f64..0.9, seed in 0u64..100) {
        let t = Tensor::vector(x.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = apply_dropout(&t, p, Mode::Train, &mut rng).unwrap();
        for (a, b) in x.iter().zip(y.data()) {
            prop_assert!(*b == 0.0 || (b - a / (1.0 - p)).abs() < 1e-12);
        }
        prop_assert_eq!(apply_dropout(&t, p, Mode::Eval, &mut rng).unwrap(), t);
    }

    #[test]
    fn adadelta_moves_against_gradient(theta in -3.0f64..3.0, grad in -10.0f64..10.0, lr in 0.01f64..2.0) {
        prop_assume!(grad.abs() > 1e-6);
        let mut p = Tensor::vector(vec![theta]);
        let mut eg = Tensor::zeros(&[1]);
        let mut ed = Tensor::zeros(&[1]);
        adadelta_step(&mut p, &Tensor::vector(vec![grad]), &mut eg, &mut ed, 0.95, 1e-6, lr).unwrap();
        let delta = p.data()[0] - theta;
        prop_assert!(delta * grad < 0.0);
        prop_assert!(eg.data()[0] > 0.0 && ed.data()[0] > 0.0);
    }

    #[test]
    fn synth_labels_follow_hierarchy(relations in 1usize..12, levels in 1usize..3, seed in 0u64..50) {
        let spec = SynthSpec { relations, levels, bags: 5, test_bags: 2, ..SynthSpec::default() };
        let corpus = spec.generate(seed).unwrap();
        for rec in corpus.train.iter().chain(&corpus.test) {
            let anc = derive_hierarchy(&rec.relation, levels).unwrap();
            prop_assert!(anc.iter().all(|a| rec.relation.starts_with(a.as_str())));
        }
    }
}

#[test]
fn raw_record_rejects_overlapping_mentions() {
    let rec = RawRecord {
        tokens: vec!["a".into(), "b".into()],
        head: EntityMention {
            id: "x".into(),
            span: Span::new(0, 1),
        },
        tail: EntityMention {
            id: "y".into(),
            span: Span::new(0, 2),
        },
        relation: "/a/b".into(),
    };
    let (bags, rejected) = hiram_core::corpus::group_bags([(1, rec)], 1);
    assert!(bags.is_empty());
    assert_eq!(rejected[0].line, 1);
}
