//! Ranking metrics over (bag, relation) confidence pairs.
//!
//! NA is never scored and never a positive. Ties in confidence share one
//! threshold on the precision-recall curve; top-N and top-K cut-offs break
//! ties by bag key and then relation index.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BagKey, PreparedBag};
use crate::error::{Error, Result};
use crate::model::BagPrediction;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub key: BagKey,
    /// Fine class index of the gold label; 0 is NA.
    pub gold: usize,
    /// `scores[i]` is the confidence for fine class `i + 1`.
    pub scores: Vec<f64>,
}

impl PredictionRecord {
    pub fn from_prediction(bag: &PreparedBag, prediction: &BagPrediction) -> Self {
        PredictionRecord {
            key: bag.key.clone(),
            gold: bag.labels[0],
            scores: prediction.confidences[1..].to_vec(),
        }
    }

    fn is_positive(&self, relation: usize) -> bool {
        self.gold != 0 && self.gold == relation + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Pair<'r> {
    conf: f64,
    positive: bool,
    key: &'r BagKey,
    relation: usize,
}

fn ranked(records: &[PredictionRecord]) -> Result<Vec<Pair<'_>>> {
    let mut pairs = Vec::new();
    for r in records {
        for (i, &c) in r.scores.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("confidence for {:?}", r.key)));
            }
            pairs.push(Pair {
                conf: c,
                positive: r.is_positive(i),
                key: &r.key,
                relation: i,
            });
        }
    }
    pairs.sort_by(|a, b| {
        b.conf
            .partial_cmp(&a.conf)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.key.cmp(b.key))
            .then_with(|| a.relation.cmp(&b.relation))
    });
    Ok(pairs)
}

/// `(recall, precision)` after each distinct confidence threshold, in
/// descending confidence order.
pub fn pr_curve(records: &[PredictionRecord]) -> Result<Vec<(f64, f64)>> {
    let pairs = ranked(records)?;
    let positives = pairs.iter().filter(|p| p.positive).count();
    if positives == 0 {
        return Err(Error::contract("no positive pairs; recall is undefined"));
    }
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let conf = pairs[i].conf;
        while i < pairs.len() && pairs[i].conf == conf {
            tp += usize::from(pairs[i].positive);
            seen += 1;
            i += 1;
        }
        points.push((tp as f64 / positives as f64, tp as f64 / seen as f64));
    }
    Ok(points)
}

/// Trapezoidal area under the curve, starting from recall 0 at the first
/// point's precision.
pub fn pr_auc(records: &[PredictionRecord]) -> Result<f64> {
    let curve = pr_curve(records)?;
    let (mut prev_r, mut prev_p) = (0.0, curve[0].1);
    let mut area = 0.0;
    for &(r, p) in &curve {
        area += (r - prev_r) * (p + prev_p) / 2.0;
        prev_r = r;
        prev_p = p;
    }
    Ok(area)
}

/// Percentage of correct pairs among the `n` most confident.
pub fn precision_at_n(records: &[PredictionRecord], n: usize) -> Result<f64> {
    let pairs = ranked(records)?;
    if n == 0 || pairs.len() < n {
        return Err(Error::contract(format!("P@{n} needs {n} scored pairs, have {}", pairs.len())));
    }
    let hits = pairs[..n].iter().filter(|p| p.positive).count();
    Ok(100.0 * hits as f64 / n as f64)
}

/// Zero-based rank of `relation` within one record's scores.
fn rank_of(scores: &[f64], relation: usize) -> usize {
    let s = scores[relation];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c > s || (c == s && i < relation))
        .count()
}

/// Macro-averaged percentage of bags whose gold class ranks in the top `k`,
/// over the fine classes in `long_tail` that have at least one test bag.
pub fn hits_at_k(records: &[PredictionRecord], k: usize, long_tail: &BTreeSet<usize>) -> Result<f64> {
    if long_tail.is_empty() {
        return Err(Error::contract("empty long-tail relation set"));
    }
    let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        if r.gold == 0 || !long_tail.contains(&r.gold) {
            continue;
        }
        let entry = per.entry(r.gold).or_insert((0, 0));
        entry.1 += 1;
        if rank_of(&r.scores, r.gold - 1) < k {
            entry.0 += 1;
        }
    }
    if per.is_empty() {
        return Err(Error::contract("no test bags with a long-tail gold label"));
    }
    let sum: f64 = per.values().map(|&(h, n)| h as f64 / n as f64).sum();
    Ok(100.0 * sum / per.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Setting {
    One,
    Two,
    All,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::One, Setting::Two, Setting::All];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::One => "one",
            Setting::Two => "two",
            Setting::All => "all",
        }
    }
}

/// One/Two keep bags with at least two sentences and randomly retain that
/// many sentences per bag; All returns every bag unchanged.
pub fn subsample_bags(bags: &[PreparedBag], setting: Setting, seed: u64) -> Vec<PreparedBag> {
    let keep = match setting {
        Setting::One => 1,
        Setting::Two => 2,
        Setting::All => return bags.to_vec(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bags.iter()
        .filter(|b| b.sentences.len() >= 2)
        .map(|b| {
            let mut idx: Vec<usize> = (0..b.sentences.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(keep);
            idx.sort_unstable();
            let mut out = b.clone();
            out.sentences = idx.into_iter().map(|i| b.sentences[i].clone()).collect();
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn rec(name: &str, gold: usize, scores: Vec<f64>) -> PredictionRecord {
        PredictionRecord {
            key: BagKey {
                subject: name.to_string(),
                object: "o".to_string(),
                relation: "r".to_string(),
            },
            gold,
            scores,
        }
    }

    #[test]
    fn hand_pr_curve() {
        // ranks: P N P N
        let r = vec![
            rec("a", 1, vec![0.9, 0.8]),
            rec("b", 2, vec![0.1, 0.7]),
            rec("c", 0, vec![0.6, 0.05]),
        ];
        // pairs sorted: .9 P, .8 N, .7 P, .6 N, .1 N, .05 N
        let curve = pr_curve(&r).unwrap();
        assert_eq!(curve.len(), 6);
        assert_eq!(curve[0], (0.5, 1.0));
        assert_eq!(curve[1], (0.5, 0.5));
        assert_eq!(curve[2], (1.0, 2.0 / 3.0));
        let auc = pr_auc(&r).unwrap();
        let expected = 0.5 * 1.0 + 0.0 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0;
        assert!((auc - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_tied() {
        let r = vec![rec("a", 1, vec![0.9, 0.1]), rec("b", 2, vec![0.2, 0.8])];
        assert_eq!(pr_auc(&r).unwrap(), 1.0);
        let t = vec![rec("a", 1, vec![0.5, 0.5]), rec("b", 0, vec![0.5, 0.5])];
        assert!((pr_auc(&t).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(pr_curve(&t).unwrap().len(), 1);
    }

    #[test]
    fn errors() {
        let r = vec![rec("a", 0, vec![0.9, 0.1])];
        assert!(pr_auc(&r).is_err());
        assert!(precision_at_n(&r, 3).is_err());
        assert!(hits_at_k(&r, 1, &BTreeSet::new()).is_err());
    }

    #[test]
    fn precision_with_tie_order() {
        // tie at 0.5 broken by key: "a" before "b"
        let r = vec![rec("b", 1, vec![0.5]), rec("a", 0, vec![0.5])];
        assert_eq!(precision_at_n(&r, 1).unwrap(), 0.0);
        assert_eq!(precision_at_n(&r, 2).unwrap(), 50.0);
    }

    #[test]
    fn hits_macro() {
        let r = vec![
            rec("a", 1, vec![0.1, 0.5, 0.3]),
            rec("b", 1, vec![0.9, 0.05, 0.05]),
            rec("c", 3, vec![0.2, 0.3, 0.1]),
        ];
        let lt: BTreeSet<usize> = [1, 3].into_iter().collect();
        // relation 1: ranks 2 and 0; relation 3: rank 2
        assert_eq!(hits_at_k(&r, 1, &lt).unwrap(), 25.0);
        assert_eq!(hits_at_k(&r, 2, &lt).unwrap(), 25.0);
        assert_eq!(hits_at_k(&r, 3, &lt).unwrap(), 100.0);
    }
}
