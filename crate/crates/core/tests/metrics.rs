use std::collections::BTreeSet;

use hiram_core::corpus::BagKey;
use hiram_core::metrics::{hits_at_k, pr_auc, pr_curve, precision_at_n, PredictionRecord};

fn rec(name: &str, gold: usize, scores: &[f64]) -> PredictionRecord {
    PredictionRecord {
        key: BagKey {
            subject: name.to_string(),
            object: "o".to_string(),
            relation: String::new(),
        },
        gold,
        scores: scores.to_vec(),
    }
}

#[test]
fn hand_computed_curve() {
    // Pairs by confidence: .9+ .8- .7+ .6- .5- .4- ; 2 positives.
    let recs = [rec("a", 1, &[0.9, 0.4]), rec("b", 2, &[0.8, 0.7]), rec("c", 0, &[0.6, 0.5])];
    let curve = pr_curve(&recs).unwrap();
    let expected = [(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0), (1.0, 0.5), (1.0, 0.4), (1.0, 2.0 / 6.0)];
    assert_eq!(curve.len(), expected.len());
    for (c, e) in curve.iter().zip(expected) {
        assert!((c.0 - e.0).abs() < 1e-12 && (c.1 - e.1).abs() < 1e-12, "{c:?} vs {e:?}");
    }
    // 0.5 * 1.0 from the start, then 0.5 * (0.5 + 2/3) / 2.
    let auc = 0.5 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0;
    assert!((pr_auc(&recs).unwrap() - auc).abs() < 1e-12);
    assert_eq!(precision_at_n(&recs, 1).unwrap(), 100.0);
    assert_eq!(precision_at_n(&recs, 2).unwrap(), 50.0);
    assert!((precision_at_n(&recs, 3).unwrap() - 200.0 / 3.0).abs() < 1e-12);
    assert!(precision_at_n(&recs, 7).is_err());
}

#[test]
fn perfect_ranking_has_unit_area() {
    let recs = [rec("a", 1, &[0.9, 0.1]), rec("b", 2, &[0.2, 0.8])];
    assert!((pr_auc(&recs).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn all_tied_area_is_prevalence() {
    let recs = [
        rec("a", 1, &[0.5, 0.5, 0.5]),
        rec("b", 0, &[0.5, 0.5, 0.5]),
        rec("c", 3, &[0.5, 0.5, 0.5]),
    ];
    assert_eq!(pr_curve(&recs).unwrap().len(), 1);
    assert!((pr_auc(&recs).unwrap() - 2.0 / 9.0).abs() < 1e-12);
}

#[test]
fn na_bags_only_contribute_negatives() {
    let recs = [rec("a", 0, &[0.9, 0.8])];
    assert!(pr_auc(&recs).is_err());
    let recs = [rec("a", 0, &[0.9, 0.8]), rec("b", 1, &[0.1, 0.0])];
    // The only positive ranks third of four: curve (0,0), (0,0), (1,1/3), (1,1/4).
    assert_eq!(precision_at_n(&recs, 2).unwrap(), 0.0);
    assert!((pr_auc(&recs).unwrap() - 1.0 / 6.0).abs() < 1e-12);
}

#[test]
fn top_n_ties_break_by_bag_key() {
    let recs = [rec("b", 1, &[0.5]), rec("a", 0, &[0.5])];
    assert_eq!(precision_at_n(&recs, 1).unwrap(), 0.0);
    let recs = [rec("a", 1, &[0.5]), rec("b", 0, &[0.5])];
    assert_eq!(precision_at_n(&recs, 1).unwrap(), 100.0);
}

#[test]
fn hits_are_macro_averaged() {
    let recs = [
        rec("a", 1, &[0.1, 0.5, 0.4]),
        rec("b", 1, &[0.9, 0.05, 0.05]),
        rec("c", 2, &[0.2, 0.3, 0.5]),
        rec("d", 0, &[0.3, 0.3, 0.3]),
    ];
    let tail: BTreeSet<usize> = [1, 2].into();
    // Class 1: ranks 3 and 1; class 2: rank 2.
    assert!((hits_at_k(&recs, 1, &tail).unwrap() - 25.0).abs() < 1e-12);
    assert!((hits_at_k(&recs, 2, &tail).unwrap() - 75.0).abs() < 1e-12);
    assert!((hits_at_k(&recs, 3, &tail).unwrap() - 100.0).abs() < 1e-12);
    let only3: BTreeSet<usize> = [3].into();
    assert!(hits_at_k(&recs, 1, &only3).is_err());
    assert!(hits_at_k(&recs, 1, &BTreeSet::new()).is_err());
}

#[test]
fn non_finite_scores_are_rejected() {
    let recs = [rec("a", 1, &[f64::NAN])];
    assert!(pr_auc(&recs).is_err());
}
