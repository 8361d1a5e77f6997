use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Label used for "no relation" at every level.
pub const NA: &str = "NA";

/// Coarse ancestors of a relation path, finest first.
///
/// Level `l` drops the last `l` path segments, so
/// `/business/company/founders` with `m = 2` gives
/// `["/business/company", "/business"]`. `NA` maps to `NA` everywhere.
pub fn derive_hierarchy(label: &str, m: usize) -> Result<Vec<String>> {
    if label == NA {
        return Ok(vec![NA.to_string(); m]);
    }
    let segments: Vec<&str> = label.split('/').filter(|s| !s.is_empty()).collect();
    if !label.starts_with('/') || segments.len() < m + 1 {
        return Err(Error::contract(format!(
            "relation `{label}` needs at least {} path segments for {m} coarse levels",
            m + 1
        )));
    }
    Ok((1..=m)
        .map(|l| {
            let keep = &segments[..segments.len() - l];
            let mut s = String::new();
            for seg in keep {
                s.push('/');
                s.push_str(seg);
            }
            s
        })
        .collect())
}

/// Label sets per level with contiguous indices; `NA` is index 0 at every level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationHierarchy {
    labels: Vec<Vec<String>>,
    index: Vec<BTreeMap<String, usize>>,
    /// `parents[l][fine]` is the level-`l` index of fine class `fine`.
    parents: Vec<Vec<usize>>,
}

impl RelationHierarchy {
    /// Builds the hierarchy from fine labels. Fine classes keep first-seen
    /// order after `NA`; coarse classes are ordered by first appearance among
    /// the fine classes.
    pub fn from_labels<'s>(labels: impl IntoIterator<Item = &'s str>, m: usize) -> Result<Self> {
        let mut fine: Vec<String> = vec![NA.to_string()];
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        seen.insert(NA.to_string(), 0);
        for l in labels {
            if !seen.contains_key(l) {
                seen.insert(l.to_string(), fine.len());
                fine.push(l.to_string());
            }
        }
        Self::from_fine(fine, m)
    }

    /// Rebuilds from an ordered fine label list whose first entry is `NA`.
    pub fn from_fine(fine: Vec<String>, m: usize) -> Result<Self> {
        if fine.first().map(String::as_str) != Some(NA) {
            return Err(Error::contract("fine label list must start with NA"));
        }
        let mut labels = vec![fine.clone()];
        let mut index = vec![fine.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect::<BTreeMap<_, _>>()];
        if index[0].len() != fine.len() {
            return Err(Error::contract("duplicate fine relation label"));
        }
        let mut parents = vec![(0..fine.len()).collect::<Vec<_>>()];
        let ancestors: Vec<Vec<String>> = fine.iter().map(|l| derive_hierarchy(l, m)).collect::<Result<_>>()?;
        for level in 1..=m {
            let mut names = vec![NA.to_string()];
            let mut map = BTreeMap::new();
            map.insert(NA.to_string(), 0);
            let mut par = Vec::with_capacity(fine.len());
            for anc in &ancestors {
                let name = &anc[level - 1];
                let idx = *map.entry(name.clone()).or_insert_with(|| {
                    names.push(name.clone());
                    names.len() - 1
                });
                par.push(idx);
            }
            labels.push(names);
            index.push(map);
            parents.push(par);
        }
        Ok(RelationHierarchy { labels, index, parents })
    }

    /// Number of coarse levels M.
    pub fn coarse_levels(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn class_count(&self, level: usize) -> usize {
        self.labels[level].len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    pub fn label(&self, level: usize, idx: usize) -> &str {
        &self.labels[level][idx]
    }

    pub fn labels(&self, level: usize) -> &[String] {
        &self.labels[level]
    }

    pub fn index_of(&self, level: usize, label: &str) -> Option<usize> {
        self.index[level].get(label).copied()
    }

    /// Class index at every level `0..=M` for a fine class.
    pub fn ancestors(&self, fine: usize) -> Vec<usize> {
        self.parents.iter().map(|p| p[fine]).collect()
    }

    /// Per-level class indices for a fine label, if known.
    pub fn encode(&self, label: &str) -> Option<Vec<usize>> {
        self.index_of(0, label).map(|i| self.ancestors(i))
    }

    /// Same hierarchy truncated to the first `m` coarse levels.
    pub fn truncated(&self, m: usize) -> Self {
        let keep = (m + 1).min(self.labels.len());
        RelationHierarchy {
            labels: self.labels[..keep].to_vec(),
            index: self.index[..keep].to_vec(),
            parents: self.parents[..keep].to_vec(),
        }
    }
}
