//! Model, corpus and training configuration with flat `section.key` access.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};

/// How type embeddings are widened before pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeAug {
    /// `[t; e]`: each type row is concatenated with its owner entity embedding.
    Entity,
    /// Plain type embedding.
    None,
}

impl FromStr for TypeAug {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entity" => Ok(TypeAug::Entity),
            "none" => Ok(TypeAug::None),
            _ => Err(Error::Config(format!("type_aug must be `entity` or `none`, got `{s}`"))),
        }
    }
}

impl TypeAug {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeAug::Entity => "entity",
            TypeAug::None => "none",
        }
    }
}

/// Named ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Full,
    NoHierarchy,
    NoCfte,
    NoGuidance,
    TypeConcat,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Preset::Full,
            "no-hierarchy" => Preset::NoHierarchy,
            "no-cfte" => Preset::NoCfte,
            "no-guidance" => Preset::NoGuidance,
            "type-concat" => Preset::TypeConcat,
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset `{s}` (expected full, no-hierarchy, no-cfte, no-guidance, type-concat)"
                )))
            }
        })
    }
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::NoHierarchy => "no-hierarchy",
            Preset::NoCfte => "no-cfte",
            Preset::NoGuidance => "no-guidance",
            Preset::TypeConcat => "type-concat",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// d_e
    pub word_dim: usize,
    /// d_p
    pub pos_dim: usize,
    /// Convolution filters; the sentence vector has `3 * filters` entries.
    pub filters: usize,
    pub window: usize,
    /// Number of coarse relation levels M.
    pub levels: usize,
    /// Relative distances are clipped to `[-max_distance, max_distance]`.
    pub max_distance: usize,
    pub type_aug: TypeAug,
    pub hierarchy: bool,
    pub cfte: bool,
    pub guidance: bool,
    pub pairwise_types: bool,
    /// Weight of the sentence-level loss.
    pub beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 50,
            pos_dim: 5,
            filters: 230,
            window: 3,
            levels: 2,
            max_distance: 100,
            type_aug: TypeAug::Entity,
            hierarchy: true,
            cfte: true,
            guidance: true,
            pairwise_types: true,
            beta: 1.0,
        }
    }
}

impl ModelConfig {
    /// d_w = d_e + 2 d_p
    pub fn token_dim(&self) -> usize {
        self.word_dim + 2 * self.pos_dim
    }

    /// d_h
    pub fn hidden_dim(&self) -> usize {
        3 * self.filters
    }

    /// Width of a single (possibly augmented) type vector.
    pub fn type_dim(&self) -> usize {
        match self.type_aug {
            TypeAug::Entity => 2 * self.word_dim,
            TypeAug::None => self.word_dim,
        }
    }

    /// d_c, width of a pairwise type column.
    pub fn pair_dim(&self) -> usize {
        2 * self.type_dim()
    }

    /// Coarse levels actually modelled (0 when the hierarchy is switched off).
    pub fn effective_levels(&self) -> usize {
        if self.hierarchy {
            self.levels
        } else {
            0
        }
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Full => {}
            Preset::NoHierarchy => self.hierarchy = false,
            Preset::NoCfte => self.cfte = false,
            Preset::NoGuidance => self.guidance = false,
            Preset::TypeConcat => self.pairwise_types = false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    /// Types kept per entity (K_t); shorter lists are padded with BLANK.
    pub types_per_entity: usize,
    pub min_word_freq: usize,
    /// Long-tail relations counted by sentences (true) or bags (false).
    pub long_tail_by_sentences: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            types_per_entity: 4,
            min_word_freq: 2,
            long_tail_by_sentences: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub corpus: CorpusConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
    pub seed: u64,
    /// Fraction of training bags held out for best-epoch selection.
    pub dev_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            corpus: CorpusConfig::default(),
            batch_size: 160,
            epochs: 15,
            dropout: 0.5,
            weight_decay: 1e-5,
            learning_rate: 0.1,
            rho: 0.95,
            eps: 1e-6,
            seed: 0,
            dev_fraction: 0.1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "model.word_dim",
        "model.pos_dim",
        "model.filters",
        "model.window",
        "model.levels",
        "model.max_distance",
        "model.type_aug",
        "model.hierarchy",
        "model.cfte",
        "model.guidance",
        "model.pairwise_types",
        "model.beta",
        "corpus.types_per_entity",
        "corpus.min_word_freq",
        "corpus.long_tail_by_sentences",
        "train.batch_size",
        "train.epochs",
        "train.dropout",
        "train.weight_decay",
        "train.learning_rate",
        "train.rho",
        "train.eps",
        "train.seed",
        "train.dev_fraction",
    ];

    /// Sets one option by its flat key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let c = &mut self.corpus;
        match key {
            "model.word_dim" => m.word_dim = parse(key, value)?,
            "model.pos_dim" => m.pos_dim = parse(key, value)?,
            "model.filters" => m.filters = parse(key, value)?,
            "model.window" => m.window = parse(key, value)?,
            "model.levels" => m.levels = parse(key, value)?,
            "model.max_distance" => m.max_distance = parse(key, value)?,
            "model.type_aug" => m.type_aug = value.trim().parse()?,
            "model.hierarchy" => m.hierarchy = parse_bool(key, value)?,
            "model.cfte" => m.cfte = parse_bool(key, value)?,
            "model.guidance" => m.guidance = parse_bool(key, value)?,
            "model.pairwise_types" => m.pairwise_types = parse_bool(key, value)?,
            "model.beta" => m.beta = parse(key, value)?,
            "corpus.types_per_entity" => c.types_per_entity = parse(key, value)?,
            "corpus.min_word_freq" => c.min_word_freq = parse(key, value)?,
            "corpus.long_tail_by_sentences" => c.long_tail_by_sentences = parse_bool(key, value)?,
            "train.batch_size" => self.batch_size = parse(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.dropout" => self.dropout = parse(key, value)?,
            "train.weight_decay" => self.weight_decay = parse(key, value)?,
            "train.learning_rate" => self.learning_rate = parse(key, value)?,
            "train.rho" => self.rho = parse(key, value)?,
            "train.eps" => self.eps = parse(key, value)?,
            "train.seed" => self.seed = parse(key, value)?,
            "train.dev_fraction" => self.dev_fraction = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// All options as `(key, value)` pairs in [`Self::KEYS`] order; feeding
    /// them back through [`Self::set`] reproduces the configuration.
    pub fn entries(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let c = &self.corpus;
        let values: [String; 24] = [
            m.word_dim.to_string(),
            m.pos_dim.to_string(),
            m.filters.to_string(),
            m.window.to_string(),
            m.levels.to_string(),
            m.max_distance.to_string(),
            m.type_aug.as_str().to_string(),
            m.hierarchy.to_string(),
            m.cfte.to_string(),
            m.guidance.to_string(),
            m.pairwise_types.to_string(),
            format!("{:?}", m.beta),
            c.types_per_entity.to_string(),
            c.min_word_freq.to_string(),
            c.long_tail_by_sentences.to_string(),
            self.batch_size.to_string(),
            self.epochs.to_string(),
            format!("{:?}", self.dropout),
            format!("{:?}", self.weight_decay),
            format!("{:?}", self.learning_rate),
            format!("{:?}", self.rho),
            format!("{:?}", self.eps),
            self.seed.to_string(),
            format!("{:?}", self.dev_fraction),
        ];
        Self::KEYS.iter().zip(values).map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let positive = [
            ("model.word_dim", m.word_dim),
            ("model.pos_dim", m.pos_dim),
            ("model.filters", m.filters),
            ("model.window", m.window),
            ("corpus.types_per_entity", self.corpus.types_per_entity),
            ("train.batch_size", self.batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if m.window.is_multiple_of(2) {
            return Err(Error::Config("`model.window` must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("`train.dropout` must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(Error::Config("`train.dev_fraction` must lie in [0, 1)".into()));
        }
        if m.beta < 0.0 || !m.beta.is_finite() {
            return Err(Error::Config("`model.beta` must be non-negative".into()));
        }
        if self.weight_decay < 0.0 || self.learning_rate <= 0.0 || self.eps <= 0.0 {
            return Err(Error::Config("optimizer constants out of range".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config("`train.rho` must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
