use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Row reserved for the BLANK type mention.
pub const BLANK_ROW: usize = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BLANK_TOKEN: &str = "<blank>";

/// Word to row index, with PAD, UNK and BLANK in rows 0, 1 and 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Keeps words seen at least `min_freq` times, in order of first sight.
    pub fn build<'s>(tokens: impl IntoIterator<Item = &'s str>, min_freq: usize) -> Self {
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (pos, t) in tokens.into_iter().enumerate() {
            counts.entry(t).or_insert((0, pos)).0 += 1;
        }
        let mut kept: Vec<(usize, &str)> = counts
            .into_iter()
            .filter(|(_, (c, _))| *c >= min_freq.max(1))
            .map(|(w, (_, first))| (first, w))
            .collect();
        kept.sort_unstable();
        Self::from_words(kept.into_iter().map(|(_, w)| w.to_string()).collect())
            .expect("reserved words never collide with counted tokens after filtering")
    }

    /// Rebuilds from the non-reserved words in row order (rows 3..).
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut all: Vec<String> = [PAD_TOKEN, UNK_TOKEN, BLANK_TOKEN].iter().map(|s| s.to_string()).collect();
        let mut index = BTreeMap::new();
        for (i, w) in all.iter().enumerate() {
            index.insert(w.clone(), i);
        }
        for w in words {
            if index.contains_key(&w) {
                if w == PAD_TOKEN || w == UNK_TOKEN || w == BLANK_TOKEN {
                    continue;
                }
                return Err(Error::contract(alloc::format!("duplicate vocabulary word `{w}`")));
            }
            index.insert(w.clone(), all.len());
            all.push(w);
        }
        Ok(Vocabulary { words: all, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Row of a word; unknown words map to UNK.
    pub fn get(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    /// Non-reserved words in row order.
    pub fn words(&self) -> &[String] {
        &self.words[3..]
    }
}

/// Entity identifier to row index; row 0 is shared by unseen entities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityIndex {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl EntityIndex {
    pub const UNSEEN: usize = 0;

    pub fn from_ids<'s>(ids: impl IntoIterator<Item = &'s str>) -> Self {
        let mut all = alloc::vec![String::from("<unseen>")];
        let mut index = BTreeMap::new();
        for id in ids {
            if !index.contains_key(id) {
                index.insert(id.to_string(), all.len());
                all.push(id.to_string());
            }
        }
        EntityIndex { ids: all, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> usize {
        self.index.get(id).copied().unwrap_or(Self::UNSEEN)
    }

    /// Known entity ids in row order (rows 1..).
    pub fn ids(&self) -> &[String] {
        &self.ids[1..]
    }
}

/// Splits a type mention on `/`, `.` and `_`, lowercasing each piece.
///
/// `people.deceased_person` becomes `["people", "deceased", "person"]`.
pub fn tokenize_type(mention: &str) -> Vec<String> {
    mention
        .split(['/', '.', '_'])
        .filter(|s| !s.is_empty())
        .map(|s| s.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_rows() {
        let v = Vocabulary::build(["a", "b", "a", "c", "c", "c"], 2);
        assert_eq!(v.get(PAD_TOKEN), PAD);
        assert_eq!(v.get(UNK_TOKEN), UNK);
        assert_eq!(v.get(BLANK_TOKEN), BLANK_ROW);
        assert_eq!(v.get("a"), 3);
        assert_eq!(v.get("c"), 4);
        assert_eq!(v.get("b"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn rebuild_from_words_is_identical() {
        let v = Vocabulary::build(["x", "y", "x", "y", "z"], 1);
        let w = Vocabulary::from_words(v.words().to_vec()).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn type_tokenization() {
        assert_eq!(tokenize_type("people.deceased_person"), alloc::vec!["people", "deceased", "person"]);
        assert_eq!(tokenize_type("/Location/Location"), alloc::vec!["location", "location"]);
    }

    #[test]
    fn entity_index_unseen_row() {
        let e = EntityIndex::from_ids(["m.1", "m.2", "m.1"]);
        assert_eq!(e.len(), 3);
        assert_eq!(e.get("m.2"), 2);
        assert_eq!(e.get("m.9"), EntityIndex::UNSEEN);
    }
}
