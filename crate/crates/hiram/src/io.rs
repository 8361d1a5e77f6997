//! Line-delimited JSON corpus, type and output files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hiram_core::corpus::{EntityMention, RawRecord, Span};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionJson {
    pub id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordJson {
    pub tokens: Vec<String>,
    pub head: MentionJson,
    pub tail: MentionJson,
    pub relation: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypesJson {
    pub id: String,
    pub types: Vec<String>,
}

impl From<RecordJson> for RawRecord {
    fn from(r: RecordJson) -> Self {
        let mention = |m: MentionJson| EntityMention {
            id: m.id,
            span: Span::new(m.start, m.end),
        };
        RawRecord {
            tokens: r.tokens,
            head: mention(r.head),
            tail: mention(r.tail),
            relation: r.relation,
        }
    }
}

impl From<&RawRecord> for RecordJson {
    fn from(r: &RawRecord) -> Self {
        let mention = |m: &EntityMention| MentionJson {
            id: m.id.clone(),
            start: m.span.start,
            end: m.span.end,
        };
        RecordJson {
            tokens: r.tokens.clone(),
            head: mention(&r.head),
            tail: mention(&r.tail),
            relation: r.relation.clone(),
        }
    }
}

/// Parses every non-blank line; returns `(line number, value)` pairs.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| AppError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    if out.is_empty() {
        log::warn!("{} contains no records", path.display());
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| AppError::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| AppError::io(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    Ok(read_jsonl::<RecordJson>(path)?
        .into_iter()
        .map(|(line, r)| (line, r.into()))
        .collect())
}

pub fn write_records(path: &Path, records: &[RawRecord]) -> Result<()> {
    write_jsonl(path, records.iter().map(RecordJson::from))
}

pub fn read_types(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    Ok(read_jsonl::<TypesJson>(path)?.into_iter().map(|(_, t)| (t.id, t.types)).collect())
}

pub fn write_types(path: &Path, types: &[(String, Vec<String>)]) -> Result<()> {
    write_jsonl(
        path,
        types.iter().map(|(id, t)| TypesJson {
            id: id.clone(),
            types: t.clone(),
        }),
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}
