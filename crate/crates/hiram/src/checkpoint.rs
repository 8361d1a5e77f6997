//! Checkpoints: a binary named-tensor container plus a JSON manifest.
//!
//! Container layout, all integers little-endian:
//! `b"HIRAMCK1"`, `u32` tensor count, then per tensor `u32` name length,
//! UTF-8 name, `u32` rank, `u64` per dimension and `f64` values.

use std::collections::BTreeMap;
use std::path::Path;

use hiram_core::corpus::{Corpus, EntityIndex, RelationHierarchy, TypeInventory, Vocabulary};
use hiram_core::trainer::Trainer;
use hiram_core::{Hiram, ParamSet, Tensor, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 8] = b"HIRAMCK1";
const SQ_GRAD: &str = "opt.sq_grad/";
const SQ_DELTA: &str = "opt.sq_delta/";

pub fn encode(tensors: &[(&str, &Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'b> {
    bytes: &'b [u8],
    at: usize,
}

impl<'b> Cursor<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AppError::Format(format!("checkpoint truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(8)? != MAGIC {
        return Err(AppError::Format("not a checkpoint (bad magic)".into()));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| AppError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or_else(|| AppError::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if c.at != bytes.len() {
        return Err(AppError::Format("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

/// Parameters and optimizer accumulators of a trainer.
pub fn trainer_tensors(trainer: &Trainer) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = trainer.model.params.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect();
    for (prefix, set) in [(SQ_GRAD, &trainer.optimizer.sq_grad), (SQ_DELTA, &trainer.optimizer.sq_delta)] {
        out.extend(set.iter().map(|(_, n, t)| (format!("{prefix}{n}"), t.clone())));
    }
    out
}

pub fn save(path: &Path, trainer: &Trainer) -> Result<()> {
    let tensors = trainer_tensors(trainer);
    let refs: Vec<(&str, &Tensor)> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    std::fs::write(path, encode(&refs)).map_err(|e| AppError::io(path, e))
}

fn restore(set: &mut ParamSet, name: &str, t: Tensor) -> Result<()> {
    set.set(name, t).map_err(AppError::from)
}

/// Loads parameters and, when present, optimizer state into `trainer`.
/// Every model parameter must be present.
pub fn load_into(path: &Path, trainer: &mut Trainer) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    let mut seen = 0;
    for (name, t) in decode(&bytes)? {
        if let Some(n) = name.strip_prefix(SQ_GRAD) {
            restore(&mut trainer.optimizer.sq_grad, n, t)?;
        } else if let Some(n) = name.strip_prefix(SQ_DELTA) {
            restore(&mut trainer.optimizer.sq_delta, n, t)?;
        } else {
            restore(&mut trainer.model.params, &name, t)?;
            seen += 1;
        }
    }
    if seen != trainer.model.params.len() {
        return Err(AppError::Format(format!(
            "checkpoint has {seen} parameters, model expects {}",
            trainer.model.params.len()
        )));
    }
    Ok(())
}

/// Everything besides tensors needed to rebuild a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub epoch: usize,
    pub best_epoch: Option<usize>,
    /// Non-reserved vocabulary words in row order.
    pub vocab: Vec<String>,
    /// Known entity ids in row order.
    pub entities: Vec<String>,
    /// Fine relation labels in index order, NA first.
    pub relations: Vec<String>,
    /// Coarse levels of the corpus hierarchy.
    pub levels: usize,
}

impl Manifest {
    pub fn new(trainer: &Trainer, corpus: &Corpus, best_epoch: Option<usize>) -> Self {
        Manifest {
            config: trainer.config.entries().into_iter().collect(),
            seed: trainer.config.seed,
            epoch: trainer.epoch,
            best_epoch,
            vocab: corpus.vocab.words().to_vec(),
            entities: corpus.entities.ids().to_vec(),
            relations: corpus.hierarchy.labels(0).to_vec(),
            levels: corpus.hierarchy.coarse_levels(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| AppError::Format(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AppError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        for (k, v) in &self.config {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Corpus tables with `types` as the type inventory.
    pub fn corpus(&self, types: TypeInventory) -> Result<Corpus> {
        Ok(Corpus {
            vocab: Vocabulary::from_words(self.vocab.clone())?,
            entities: EntityIndex::from_ids(self.entities.iter().map(String::as_str)),
            types,
            hierarchy: RelationHierarchy::from_fine(self.relations.clone(), self.levels)?,
        })
    }

    /// Freshly initialized trainer with this manifest's shapes.
    pub fn trainer(&self, corpus: &Corpus) -> Result<Trainer> {
        let config = self.train_config()?;
        let model = Hiram::new(
            &config.model,
            corpus.vocab.len(),
            corpus.entities.len(),
            &corpus.hierarchy,
            config.seed,
        )?;
        let mut t = Trainer::new(config, model)?;
        t.epoch = self.epoch;
        Ok(t)
    }
}
