//! Sentences, bags, entity types, vocabularies and the relation hierarchy.

mod dataset;
mod hierarchy;
mod prepare;
mod vocab;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub use dataset::Dataset;
pub use hierarchy::{derive_hierarchy, RelationHierarchy, NA};
pub use prepare::{prepare_bag, Encoder, PreparedBag, PreparedEntity, PreparedSentence};
pub use vocab::{tokenize_type, EntityIndex, Vocabulary, BLANK_ROW, BLANK_TOKEN, PAD, UNK};

use crate::config::CorpusConfig;
use crate::error::{Error, Result};

/// Reserved type mention used as padding.
pub const BLANK: &str = "BLANK";

/// Half-open token interval `start..end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityMention {
    pub id: String,
    pub span: Span,
}

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub tokens: Vec<String>,
    pub head: EntityMention,
    pub tail: EntityMention,
    pub relation: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceInstance {
    pub tokens: Vec<String>,
    pub head: Span,
    pub tail: Span,
    pub relation: String,
}

impl SentenceInstance {
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::contract("sentence has no tokens"));
        }
        for (name, s) in [("head", self.head), ("tail", self.tail)] {
            if s.is_empty() || s.end > n {
                return Err(Error::contract(format!(
                    "{name} span {}..{} out of range for {n} tokens",
                    s.start, s.end
                )));
            }
        }
        if self.head.overlaps(&self.tail) {
            return Err(Error::contract("head and tail spans overlap"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BagKey {
    pub subject: String,
    pub object: String,
    pub relation: String,
}

/// Sentences sharing an entity pair and distant label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bag {
    pub subject: String,
    pub object: String,
    pub relation: String,
    /// `r^(1) .. r^(M)`.
    pub coarse: Vec<String>,
    pub instances: Vec<SentenceInstance>,
}

impl Bag {
    pub fn key(&self) -> BagKey {
        BagKey {
            subject: self.subject.clone(),
            object: self.object.clone(),
            relation: self.relation.clone(),
        }
    }
}

/// Why a record was dropped during ingestion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejected {
    pub line: usize,
    pub reason: String,
}

/// Groups records by (subject, object, relation) in order of first
/// appearance. Records with invalid spans or labels are rejected, not fatal.
pub fn group_bags(records: impl IntoIterator<Item = (usize, RawRecord)>, levels: usize) -> (Vec<Bag>, Vec<Rejected>) {
    let mut bags: Vec<Bag> = Vec::new();
    let mut slot: BTreeMap<BagKey, usize> = BTreeMap::new();
    let mut rejected = Vec::new();
    for (line, r) in records {
        let inst = SentenceInstance {
            tokens: r.tokens,
            head: r.head.span,
            tail: r.tail.span,
            relation: r.relation,
        };
        if let Err(e) = inst.validate() {
            rejected.push(Rejected {
                line,
                reason: e.to_string(),
            });
            continue;
        }
        let coarse = match derive_hierarchy(&inst.relation, levels) {
            Ok(c) => c,
            Err(e) => {
                rejected.push(Rejected {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let key = BagKey {
            subject: r.head.id,
            object: r.tail.id,
            relation: inst.relation.clone(),
        };
        match slot.get(&key) {
            Some(&i) => bags[i].instances.push(inst),
            None => {
                slot.insert(key.clone(), bags.len());
                bags.push(Bag {
                    subject: key.subject,
                    object: key.object,
                    relation: key.relation,
                    coarse,
                    instances: alloc::vec![inst],
                });
            }
        }
    }
    (bags, rejected)
}

/// Normalized type lists: exactly `limit` mentions per entity, BLANK-padded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeInventory {
    limit: usize,
    types: BTreeMap<String, Vec<String>>,
}

impl TypeInventory {
    pub fn new(limit: usize) -> Self {
        TypeInventory {
            limit,
            types: BTreeMap::new(),
        }
    }

    /// Adds or replaces an entity's types. BLANK entries in the input are
    /// dropped so that BLANK only ever appears as tail padding.
    pub fn insert(&mut self, id: &str, mentions: &[String]) {
        let mut list: Vec<String> = mentions
            .iter()
            .filter(|m| m.as_str() != BLANK && !m.trim().is_empty())
            .take(self.limit)
            .cloned()
            .collect();
        list.resize(self.limit, BLANK.to_string());
        self.types.insert(id.to_string(), list);
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn contains(&self, id: &str) -> bool {
        self.types.contains_key(id)
    }

    /// Normalized list; unknown entities get an all-BLANK list.
    pub fn get(&self, id: &str) -> Vec<String> {
        match self.types.get(id) {
            Some(t) => t.clone(),
            None => alloc::vec![BLANK.to_string(); self.limit],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.types.iter()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// Signed distance of every token to the nearest token of `span`, clipped.
fn distances_to(n: usize, span: Span, max: usize) -> Vec<i64> {
    let m = max as i64;
    (0..n)
        .map(|i| {
            let d = if i < span.start {
                i as i64 - span.start as i64
            } else if i >= span.end {
                i as i64 - (span.end as i64 - 1)
            } else {
                0
            };
            d.clamp(-m, m)
        })
        .collect()
}

/// Per-token distances to the subject and object spans, clipped to
/// `[-max_distance, max_distance]`.
pub fn relative_distances(inst: &SentenceInstance, max_distance: usize) -> (Vec<i64>, Vec<i64>) {
    let n = inst.tokens.len();
    (distances_to(n, inst.head, max_distance), distances_to(n, inst.tail, max_distance))
}

/// Non-NA relations with fewer than `threshold` training instances
/// (sentences, or bags when `by_sentences` is false).
pub fn long_tail_filter(bags: &[Bag], threshold: usize, by_sentences: bool) -> BTreeSet<String> {
    instance_counts(bags, by_sentences)
        .into_iter()
        .filter(|(r, c)| r != NA && *c < threshold)
        .map(|(r, _)| r)
        .collect()
}

/// Training instances per relation label.
pub fn instance_counts(bags: &[Bag], by_sentences: bool) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for b in bags {
        let n = if by_sentences { b.instances.len() } else { 1 };
        *counts.entry(b.relation.clone()).or_insert(0) += n;
    }
    counts
}

/// Counts from ingesting one corpus split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub records: usize,
    pub rejected: Vec<Rejected>,
    pub bags: usize,
    /// Entities that appear in bags but have no types (all-BLANK lists).
    pub untyped_entities: Vec<String>,
    /// Bags dropped because their label is absent from the training hierarchy.
    pub unknown_relation_bags: usize,
}

/// Training-side lookup tables shared by every split.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub entities: EntityIndex,
    pub types: TypeInventory,
    pub hierarchy: RelationHierarchy,
}

impl Corpus {
    /// Builds vocabulary, entity index and hierarchy from training bags.
    /// The vocabulary counts sentence tokens and tokenized type mentions.
    pub fn build(train: &[Bag], types: TypeInventory, config: &CorpusConfig, levels: usize) -> Result<Self> {
        let type_tokens: Vec<String> = types
            .iter()
            .flat_map(|(_, list)| list.iter())
            .filter(|m| m.as_str() != BLANK)
            .flat_map(|m| tokenize_type(m))
            .collect();
        let words = train
            .iter()
            .flat_map(|b| b.instances.iter())
            .flat_map(|i| i.tokens.iter().map(String::as_str))
            .chain(type_tokens.iter().map(String::as_str));
        let vocab = Vocabulary::build(words, config.min_word_freq);
        let entities = EntityIndex::from_ids(train.iter().flat_map(|b| [b.subject.as_str(), b.object.as_str()]));
        let hierarchy = RelationHierarchy::from_labels(train.iter().map(|b| b.relation.as_str()), levels)?;
        Ok(Corpus {
            vocab,
            entities,
            types,
            hierarchy,
        })
    }

    /// Entities of `bags` without an entry in the type inventory.
    pub fn untyped(&self, bags: &[Bag]) -> Vec<String> {
        let set: BTreeSet<&str> = bags
            .iter()
            .flat_map(|b| [b.subject.as_str(), b.object.as_str()])
            .filter(|id| !self.types.contains(id))
            .collect();
        set.into_iter().map(String::from).collect()
    }

    /// Keeps bags whose label is in the hierarchy; returns them and the drop count.
    pub fn retain_known(&self, bags: Vec<Bag>) -> (Vec<Bag>, usize) {
        let before = bags.len();
        let kept: Vec<Bag> = bags
            .into_iter()
            .filter(|b| self.hierarchy.index_of(0, &b.relation).is_some())
            .collect();
        let dropped = before - kept.len();
        (kept, dropped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(tokens: &[&str], h: (&str, usize, usize), t: (&str, usize, usize), rel: &str) -> RawRecord {
        RawRecord {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            head: EntityMention {
                id: h.0.into(),
                span: Span::new(h.1, h.2),
            },
            tail: EntityMention {
                id: t.0.into(),
                span: Span::new(t.1, t.2),
            },
            relation: rel.into(),
        }
    }

    #[test]
    fn grouping_by_pair_and_relation() {
        let rs = vec![
            (1, rec(&["a", "x", "b"], ("e1", 0, 1), ("e2", 2, 3), "/r/s/t")),
            (2, rec(&["a", "y", "b"], ("e1", 0, 1), ("e2", 2, 3), "/r/s/t")),
            (3, rec(&["a", "z", "b"], ("e1", 0, 1), ("e2", 2, 3), "NA")),
        ];
        let (bags, rej) = group_bags(rs, 2);
        assert!(rej.is_empty());
        assert_eq!(bags.len(), 2);
        assert_eq!(bags[0].instances.len(), 2);
        assert_eq!(bags[0].coarse, vec!["/r/s", "/r"]);
        assert_eq!(bags[1].coarse, vec!["NA", "NA"]);
    }

    #[test]
    fn out_of_range_span_rejected_with_line() {
        let rs = vec![(7, rec(&["a", "b"], ("e1", 0, 1), ("e2", 1, 3), "NA"))];
        let (bags, rej) = group_bags(rs, 1);
        assert!(bags.is_empty());
        assert_eq!(rej[0].line, 7);
        let overlapping = vec![(8, rec(&["a", "b", "c"], ("e1", 0, 2), ("e2", 1, 3), "NA"))];
        assert_eq!(group_bags(overlapping, 1).1.len(), 1);
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let (bags, rej) = group_bags(Vec::new(), 2);
        assert!(bags.is_empty() && rej.is_empty());
    }

    #[test]
    fn distances() {
        let inst = SentenceInstance {
            tokens: (0..6).map(|i| i.to_string()).collect(),
            head: Span::new(1, 3),
            tail: Span::new(4, 5),
            relation: NA.into(),
        };
        let (ds, dobj) = relative_distances(&inst, 100);
        assert_eq!(ds, vec![-1, 0, 0, 1, 2, 3]);
        assert_eq!(dobj, vec![-4, -3, -2, -1, 0, 1]);

        let long = SentenceInstance {
            tokens: (0..260).map(|i| i.to_string()).collect(),
            head: Span::new(0, 1),
            tail: Span::new(259, 260),
            relation: NA.into(),
        };
        let (ds, dobj) = relative_distances(&long, 100);
        assert_eq!(ds[200], 100);
        assert_eq!(dobj[0], -100);
    }

    #[test]
    fn long_tail_boundaries() {
        let mk = |rel: &str, n: usize| Bag {
            subject: "s".into(),
            object: "o".into(),
            relation: rel.into(),
            coarse: vec![],
            instances: vec![
                SentenceInstance {
                    tokens: vec!["w".into(), "v".into()],
                    head: Span::new(0, 1),
                    tail: Span::new(1, 2),
                    relation: rel.into(),
                };
                n
            ],
        };
        let bags = vec![mk("/a/b", 99), mk("/a/c", 100), mk(NA, 3)];
        let lt = long_tail_filter(&bags, 100, true);
        assert!(lt.contains("/a/b"));
        assert!(!lt.contains("/a/c"));
        assert!(!lt.contains(NA));
        let total: usize = instance_counts(&bags, true).values().sum();
        assert_eq!(total, 202);
    }

    #[test]
    fn type_inventory_pads_and_truncates() {
        let mut inv = TypeInventory::new(3);
        inv.insert("e1", &["a.b".into()]);
        inv.insert("e2", &["a".into(), "b".into(), "c".into(), "d".into()]);
        assert_eq!(inv.get("e1"), vec!["a.b", BLANK, BLANK]);
        assert_eq!(inv.get("e2"), vec!["a", "b", "c"]);
        assert_eq!(inv.get("nobody"), vec![BLANK; 3]);
    }
}
