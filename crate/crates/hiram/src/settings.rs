//! Run configuration: a TOML file of sections flattened to `section.key`
//! options, then `KEY=VALUE` overrides.
//!
//! ```toml
//! [model]
//! filters = 230
//! [train]
//! epochs = 15
//! [data]
//! train = "data/train.jsonl"
//! ```

use std::path::{Path, PathBuf};

use hiram_core::synth::SynthSpec;
use hiram_core::TrainConfig;

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub types: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: PathBuf::from("data/train.jsonl"),
            test: PathBuf::from("data/test.jsonl"),
            types: PathBuf::from("data/types.jsonl"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Seed of the One/Two sentence subsampling.
    pub seed: u64,
    pub p_at_n: Vec<usize>,
    pub hits_k: Vec<usize>,
    pub long_tail: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            p_at_n: vec![100, 200, 300],
            hits_k: vec![10, 15, 20],
            long_tail: vec![100, 200],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

fn list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| AppError::Usage(format!("bad list entry `{v}` for `{key}`")))
        })
        .collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    pub const EXTRA_KEYS: &'static [&'static str] = &[
        "data.train",
        "data.test",
        "data.types",
        "eval.seed",
        "eval.p_at_n",
        "eval.hits_k",
        "eval.long_tail",
    ];

    pub fn keys() -> Vec<&'static str> {
        TrainConfig::KEYS
            .iter()
            .chain(SynthSpec::KEYS)
            .chain(Self::EXTRA_KEYS)
            .copied()
            .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |_| AppError::Usage(format!("bad value `{value}` for `{key}`"));
        match key {
            "data.train" => self.data.train = PathBuf::from(value),
            "data.test" => self.data.test = PathBuf::from(value),
            "data.types" => self.data.types = PathBuf::from(value),
            "eval.seed" => self.eval.seed = value.trim().parse().map_err(bad)?,
            "eval.p_at_n" => self.eval.p_at_n = list(key, value)?,
            "eval.hits_k" => self.eval.hits_k = list(key, value)?,
            "eval.long_tail" => self.eval.long_tail = list(key, value)?,
            k if k.starts_with("synth.") => self.synth.set(k, value)?,
            k if k.starts_with("model.") || k.starts_with("corpus.") || k.starts_with("train.") => self.train.set(k, value)?,
            _ => return Err(AppError::Usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies one `KEY=VALUE` override.
    pub fn apply_override(&mut self, arg: &str) -> Result<()> {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| AppError::Usage(format!("override `{arg}` is not KEY=VALUE")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| AppError::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        let mut s = Settings::default();
        for (section, body) in &table {
            let toml::Value::Table(body) = body else {
                return Err(AppError::Usage(format!("top-level key `{section}` must be a [section]")));
            };
            for (k, v) in body {
                let key = format!("{section}.{k}");
                let value = match v {
                    toml::Value::String(s) => s.clone(),
                    toml::Value::Array(a) => a
                        .iter()
                        .map(|x| match x {
                            toml::Value::String(s) => s.clone(),
                            other => other.to_string(),
                        })
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                s.set(&key, &value)?;
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Every option as `(key, value)`.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = self.train.entries();
        let s = &self.synth;
        let synth = [
            s.relations.to_string(),
            s.levels.to_string(),
            s.branching.to_string(),
            s.bags.to_string(),
            s.test_bags.to_string(),
            format!("{:?}", s.zipf),
            format!("{:?}", s.wrong_label_rate),
            format!("{:?}", s.trigger_rate),
            format!("{:?}", s.na_fraction),
            s.types_per_entity.to_string(),
            s.distractor_types.to_string(),
            s.min_sentences.to_string(),
            s.max_sentences.to_string(),
            s.sentence_len.to_string(),
            s.filler_vocab.to_string(),
            s.name_pool.to_string(),
        ];
        out.extend(SynthSpec::KEYS.iter().zip(synth).map(|(k, v)| (k.to_string(), v)));
        let extra = [
            self.data.train.display().to_string(),
            self.data.test.display().to_string(),
            self.data.types.display().to_string(),
            self.eval.seed.to_string(),
            join(&self.eval.p_at_n),
            join(&self.eval.hits_k),
            join(&self.eval.long_tail),
        ];
        out.extend(Self::EXTRA_KEYS.iter().zip(extra).map(|(k, v)| (k.to_string(), v)));
        out
    }
}
