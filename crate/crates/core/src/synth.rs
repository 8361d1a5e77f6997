//! Synthetic distantly supervised corpora with planted entity types.
//!
//! Relation `i` is governed by the subject type `s{i % n}` and the object
//! type `o{i / n}` with `n = ceil(sqrt(R))`. Every bag gets a fresh entity
//! pair carrying its relation's governing types plus random distractors, so
//! the true relation is a function of the planted types. A configurable
//! fraction of sentences also carries a relation-specific trigger token.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EntityMention, RawRecord, Span, NA};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    /// Non-NA fine relations R.
    pub relations: usize,
    /// Coarse levels M; labels have M + 1 path segments.
    pub levels: usize,
    /// Children per coarse node.
    pub branching: usize,
    pub bags: usize,
    pub test_bags: usize,
    /// Relation frequency ∝ (rank + 1)^-zipf.
    pub zipf: f64,
    /// ρ, fraction of training bags whose distant label is replaced.
    pub wrong_label_rate: f64,
    /// Fraction of sentences carrying their relation's trigger token.
    pub trigger_rate: f64,
    pub na_fraction: f64,
    pub types_per_entity: usize,
    pub distractor_types: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub sentence_len: usize,
    pub filler_vocab: usize,
    /// Surface names shared by all entities, so names carry no signal.
    pub name_pool: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            relations: 8,
            levels: 1,
            branching: 2,
            bags: 200,
            test_bags: 100,
            zipf: 0.0,
            wrong_label_rate: 0.0,
            trigger_rate: 1.0,
            na_fraction: 0.0,
            types_per_entity: 3,
            distractor_types: 12,
            min_sentences: 1,
            max_sentences: 3,
            sentence_len: 8,
            filler_vocab: 40,
            name_pool: 20,
        }
    }
}

fn parse<T: core::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

/// Governing type pair of one relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoverningPair {
    pub relation: String,
    pub subject_type: String,
    pub object_type: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<RawRecord>,
    pub test: Vec<RawRecord>,
    /// Type mentions per entity id.
    pub types: Vec<(String, Vec<String>)>,
    /// Indexed like [`SynthSpec::labels`].
    pub governing: Vec<GoverningPair>,
    /// True relation per (subject, object).
    pub truth: BTreeMap<(String, String), String>,
}

impl SynthCorpus {
    pub fn governing_for(&self, relation: &str) -> Option<&GoverningPair> {
        self.governing.iter().find(|g| g.relation == relation)
    }
}

impl SynthSpec {
    pub const KEYS: &'static [&'static str] = &[
        "synth.relations",
        "synth.levels",
        "synth.branching",
        "synth.bags",
        "synth.test_bags",
        "synth.zipf",
        "synth.wrong_label_rate",
        "synth.trigger_rate",
        "synth.na_fraction",
        "synth.types_per_entity",
        "synth.distractor_types",
        "synth.min_sentences",
        "synth.max_sentences",
        "synth.sentence_len",
        "synth.filler_vocab",
        "synth.name_pool",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "synth.relations" => self.relations = parse(key, value)?,
            "synth.levels" => self.levels = parse(key, value)?,
            "synth.branching" => self.branching = parse(key, value)?,
            "synth.bags" => self.bags = parse(key, value)?,
            "synth.test_bags" => self.test_bags = parse(key, value)?,
            "synth.zipf" => self.zipf = parse(key, value)?,
            "synth.wrong_label_rate" => self.wrong_label_rate = parse(key, value)?,
            "synth.trigger_rate" => self.trigger_rate = parse(key, value)?,
            "synth.na_fraction" => self.na_fraction = parse(key, value)?,
            "synth.types_per_entity" => self.types_per_entity = parse(key, value)?,
            "synth.distractor_types" => self.distractor_types = parse(key, value)?,
            "synth.min_sentences" => self.min_sentences = parse(key, value)?,
            "synth.max_sentences" => self.max_sentences = parse(key, value)?,
            "synth.sentence_len" => self.sentence_len = parse(key, value)?,
            "synth.filler_vocab" => self.filler_vocab = parse(key, value)?,
            "synth.name_pool" => self.name_pool = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("synth.wrong_label_rate", self.wrong_label_rate),
            ("synth.trigger_rate", self.trigger_rate),
            ("synth.na_fraction", self.na_fraction),
        ];
        for (k, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("`{k}` = {v} outside [0, 1]")));
            }
        }
        if self.relations == 0 || self.branching == 0 || self.bags == 0 {
            return Err(Error::contract("relations, branching and bags must be positive"));
        }
        if self.zipf < 0.0 || !self.zipf.is_finite() {
            return Err(Error::contract("zipf exponent must be non-negative"));
        }
        if self.types_per_entity == 0 || self.distractor_types + 1 < self.types_per_entity {
            return Err(Error::contract("not enough distractor types to fill every entity"));
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return Err(Error::contract("need 1 <= min_sentences <= max_sentences"));
        }
        if self.sentence_len < 3 || self.filler_vocab == 0 || self.name_pool < 2 {
            return Err(Error::contract("sentences need at least 3 tokens, fillers and 2 names"));
        }
        if self.wrong_label_rate > 0.0 && self.relations < 2 {
            return Err(Error::contract("wrong labels need at least two relations"));
        }
        Ok(())
    }

    fn grid(&self) -> usize {
        let mut n = 1;
        while n * n < self.relations {
            n += 1;
        }
        n
    }

    /// Fine label of relation `i`, e.g. `/g1/r3` for M = 1 and branching 2.
    pub fn label(&self, i: usize) -> String {
        let mut s = String::new();
        for d in 0..self.levels {
            let span = self.branching.pow((self.levels - d) as u32);
            s.push_str(&format!("/g{}", i / span));
        }
        s.push_str(&format!("/r{i}"));
        s
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.relations).map(|i| self.label(i)).collect()
    }

    pub fn governing(&self, i: usize) -> GoverningPair {
        let n = self.grid();
        GoverningPair {
            relation: self.label(i),
            subject_type: format!("/planted.s{}", i % n),
            object_type: format!("/planted.o{}", i / n),
        }
    }

    pub fn trigger(&self, i: usize) -> String {
        format!("t{i}")
    }

    /// Deterministic corpus for `seed`.
    pub fn generate(&self, seed: u64) -> Result<SynthCorpus> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..self.relations).map(|r| libm::pow((r + 1) as f64, -self.zipf)).collect();
        let total: f64 = weights.iter().sum();
        let mut out = SynthCorpus {
            train: Vec::new(),
            test: Vec::new(),
            types: Vec::new(),
            governing: (0..self.relations).map(|i| self.governing(i)).collect(),
            truth: BTreeMap::new(),
        };
        for (split, count) in [("train", self.bags), ("test", self.test_bags)] {
            for b in 0..count {
                let relation = if rng.gen::<f64>() < self.na_fraction {
                    None
                } else {
                    let mut x = rng.gen::<f64>() * total;
                    let mut pick = self.relations - 1;
                    for (i, w) in weights.iter().enumerate() {
                        if x < *w {
                            pick = i;
                            break;
                        }
                        x -= w;
                    }
                    Some(pick)
                };
                let subject = format!("{split}_s{b}");
                let object = format!("{split}_o{b}");
                let gov = relation.map(|r| self.governing(r));
                out.types.push((
                    subject.clone(),
                    self.entity_types(gov.as_ref().map(|g| g.subject_type.as_str()), &mut rng),
                ));
                out.types.push((
                    object.clone(),
                    self.entity_types(gov.as_ref().map(|g| g.object_type.as_str()), &mut rng),
                ));
                let true_label = relation.map_or_else(|| NA.to_string(), |r| self.label(r));
                out.truth.insert((subject.clone(), object.clone()), true_label.clone());
                let distant = if split == "train" && rng.gen::<f64>() < self.wrong_label_rate {
                    let wrong = match relation {
                        Some(r) => (r + rng.gen_range(1..self.relations)) % self.relations,
                        None => rng.gen_range(0..self.relations),
                    };
                    self.label(wrong)
                } else {
                    true_label
                };
                let n = rng.gen_range(self.min_sentences..=self.max_sentences);
                for _ in 0..n {
                    let rec = self.sentence(&subject, &object, relation, &distant, &mut rng);
                    if split == "train" {
                        out.train.push(rec);
                    } else {
                        out.test.push(rec);
                    }
                }
            }
        }
        Ok(out)
    }

    fn entity_types(&self, governing: Option<&str>, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut pool: Vec<usize> = (0..self.distractor_types).collect();
        pool.shuffle(rng);
        let mut types: Vec<String> = Vec::with_capacity(self.types_per_entity);
        if let Some(g) = governing {
            types.push(g.to_string());
        }
        for d in pool {
            if types.len() == self.types_per_entity {
                break;
            }
            types.push(format!("/misc.d{d}"));
        }
        types.shuffle(rng);
        types
    }

    fn sentence(&self, subject: &str, object: &str, relation: Option<usize>, label: &str, rng: &mut ChaCha8Rng) -> RawRecord {
        let n = self.sentence_len;
        let mut tokens: Vec<String> = (0..n).map(|_| format!("w{}", rng.gen_range(0..self.filler_vocab))).collect();
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(rng);
        let (h, t) = (slots[0], slots[1]);
        let a = rng.gen_range(0..self.name_pool);
        let b = (a + rng.gen_range(1..self.name_pool)) % self.name_pool;
        tokens[h] = format!("n{a}");
        tokens[t] = format!("n{b}");
        if let Some(r) = relation {
            if rng.gen::<f64>() < self.trigger_rate {
                tokens[slots[2]] = self.trigger(r);
            }
        }
        RawRecord {
            tokens,
            head: EntityMention {
                id: subject.to_string(),
                span: Span::new(h, h + 1),
            },
            tail: EntityMention {
                id: object.to_string(),
                span: Span::new(t, t + 1),
            },
            relation: label.to_string(),
        }
    }
}
