use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{relative_distances, tokenize_type, Bag, BagKey, Corpus, Span, BLANK, BLANK_ROW, UNK};
use crate::error::{Error, Result};

/// Entity row plus the word rows of each of its (padded) type mentions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedEntity {
    pub row: usize,
    pub types: Vec<Vec<usize>>,
    pub type_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedSentence {
    pub tokens: Vec<usize>,
    /// Position-table rows, i.e. clipped distance shifted by `max_distance`.
    pub head_pos: Vec<usize>,
    pub tail_pos: Vec<usize>,
    pub head: Span,
    pub tail: Span,
}

impl PreparedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Index-only view of a bag, ready for the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedBag {
    pub key: BagKey,
    pub subject: PreparedEntity,
    pub object: PreparedEntity,
    pub sentences: Vec<PreparedSentence>,
    /// Class index per level, fine first.
    pub labels: Vec<usize>,
}

/// Converts bags to indices against a fixed [`Corpus`].
pub struct Encoder<'c> {
    pub corpus: &'c Corpus,
    pub max_distance: usize,
}

impl<'c> Encoder<'c> {
    pub fn new(corpus: &'c Corpus, max_distance: usize) -> Self {
        Encoder { corpus, max_distance }
    }

    pub fn entity(&self, id: &str) -> PreparedEntity {
        let names = self.corpus.types.get(id);
        let types = names
            .iter()
            .map(|m| {
                if m == BLANK {
                    vec![BLANK_ROW]
                } else {
                    let rows: Vec<usize> = tokenize_type(m).iter().map(|w| self.corpus.vocab.get(w)).collect();
                    if rows.is_empty() {
                        vec![UNK]
                    } else {
                        rows
                    }
                }
            })
            .collect();
        PreparedEntity {
            row: self.corpus.entities.get(id),
            types,
            type_names: names,
        }
    }

    pub fn bag(&self, bag: &Bag) -> Result<PreparedBag> {
        let labels = self
            .corpus
            .hierarchy
            .encode(&bag.relation)
            .ok_or_else(|| Error::contract(format!("relation `{}` not in hierarchy", bag.relation)))?;
        let shift = self.max_distance as i64;
        let sentences = bag
            .instances
            .iter()
            .map(|inst| {
                inst.validate()?;
                let (dh, dt) = relative_distances(inst, self.max_distance);
                Ok(PreparedSentence {
                    tokens: inst.tokens.iter().map(|w| self.corpus.vocab.get(w)).collect(),
                    head_pos: dh.iter().map(|d| (d + shift) as usize).collect(),
                    tail_pos: dt.iter().map(|d| (d + shift) as usize).collect(),
                    head: inst.head,
                    tail: inst.tail,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if sentences.is_empty() {
            return Err(Error::contract("bag without sentences"));
        }
        Ok(PreparedBag {
            key: bag.key(),
            subject: self.entity(&bag.subject),
            object: self.entity(&bag.object),
            sentences,
            labels,
        })
    }

    pub fn bags(&self, bags: &[Bag]) -> Result<Vec<PreparedBag>> {
        bags.iter().map(|b| self.bag(b)).collect()
    }
}

/// Shorthand for `Encoder::new(corpus, max_distance).bag(bag)`.
pub fn prepare_bag(bag: &Bag, corpus: &Corpus, max_distance: usize) -> Result<PreparedBag> {
    Encoder::new(corpus, max_distance).bag(bag)
}
