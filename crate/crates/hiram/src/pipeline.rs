//! The work behind each CLI verb.

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use hiram_core::corpus::{group_bags, long_tail_filter, Dataset, Encoder, PreparedBag, TypeInventory};
use hiram_core::gradcheck::{model_suite, op_suite, SuiteEntry};
use hiram_core::metrics::{hits_at_k, pr_auc, pr_curve, precision_at_n, subsample_bags, PredictionRecord, Setting};
use hiram_core::model::BagPrediction;
use hiram_core::synth::SynthCorpus;
use hiram_core::trainer::{split_dev, EpochReport, Trainer};
use hiram_core::Hiram;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Manifest};
use crate::error::{AppError, Result};
use crate::io;
use crate::settings::Settings;

pub const MODEL_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const ALIGNMENTS_FILE: &str = "alignments.jsonl";
pub const SUMMARY_FILE: &str = "summary.jsonl";
pub const PR_FILE: &str = "pr_curve.txt";

pub fn log_settings(settings: &Settings) {
    let line: Vec<String> = settings.entries().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    log::info!("config {}", line.join(" "));
}

/// Writes `train.jsonl`, `test.jsonl`, `types.jsonl` and `governing.jsonl` into `out`.
pub fn synth(settings: &Settings, seed: u64, out: &Path) -> Result<SynthCorpus> {
    let corpus = settings.synth.generate(seed)?;
    io::create_dir(out)?;
    io::write_records(&out.join("train.jsonl"), &corpus.train)?;
    io::write_records(&out.join("test.jsonl"), &corpus.test)?;
    io::write_types(&out.join("types.jsonl"), &corpus.types)?;
    io::write_jsonl(
        &out.join("governing.jsonl"),
        corpus.governing.iter().map(|g| {
            serde_json::json!({
                "relation": g.relation,
                "subject_type": g.subject_type,
                "object_type": g.object_type,
            })
        }),
    )?;
    log::info!(
        "synthesized {} train and {} test records with seed {seed}",
        corpus.train.len(),
        corpus.test.len()
    );
    Ok(corpus)
}

pub fn load_dataset(settings: &Settings) -> Result<Dataset> {
    let d = &settings.data;
    let train = io::read_records(&d.train)?;
    let test = if d.test.exists() { io::read_records(&d.test)? } else { Vec::new() };
    let types = io::read_types(&d.types)?;
    let m = &settings.train.model;
    let ds = Dataset::build(train, test, types, &settings.train.corpus, m.levels, m.max_distance)?;
    for (split, r) in [("train", &ds.train_report), ("test", &ds.test_report)] {
        log::info!("{split}: {} records, {} bags, {} rejected", r.records, r.bags, r.rejected.len());
        for rej in &r.rejected {
            log::warn!("{split} line {}: {}", rej.line, rej.reason);
        }
        if !r.untyped_entities.is_empty() {
            log::warn!("{split}: {} entities without types use BLANK lists", r.untyped_entities.len());
        }
        if r.unknown_relation_bags > 0 {
            log::warn!(
                "{split}: dropped {} bags with relations unseen in training",
                r.unknown_relation_bags
            );
        }
    }
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub epoch: usize,
    pub bag_loss: f64,
    pub sentence_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: Option<f64>,
}

impl From<&EpochReport> for MetricsLine {
    fn from(r: &EpochReport) -> Self {
        MetricsLine {
            epoch: r.epoch,
            bag_loss: r.bag_loss,
            sentence_loss: r.sentence_loss,
            train_accuracy: r.train_accuracy,
            dev_accuracy: r.dev_accuracy,
        }
    }
}

pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    pub best_epoch: usize,
    /// State after the last epoch.
    pub trainer: Trainer,
    pub dataset: Dataset,
}

fn epoch_file(out: &Path, epoch: usize) -> PathBuf {
    out.join("checkpoints").join(format!("epoch-{epoch:03}.ckpt"))
}

/// Trains on `data.train`, writing per-epoch checkpoints, the metrics log,
/// the best epoch's checkpoint and the manifest into `out`.
pub fn train(settings: &Settings, out: &Path) -> Result<TrainOutcome> {
    let cfg = &settings.train;
    cfg.validate()?;
    let dataset = load_dataset(settings)?;
    if dataset.train.is_empty() {
        return Err(AppError::Usage(format!("no training bags in {}", settings.data.train.display())));
    }
    let (train_idx, dev_idx) = split_dev(dataset.train.len(), cfg.dev_fraction, cfg.seed);
    let train: Vec<PreparedBag> = train_idx.iter().map(|&i| dataset.train[i].clone()).collect();
    let dev: Vec<PreparedBag> = dev_idx.iter().map(|&i| dataset.train[i].clone()).collect();
    let c = &dataset.corpus;
    let model = Hiram::new(&cfg.model, c.vocab.len(), c.entities.len(), &c.hierarchy, cfg.seed)?;
    log::info!("model has {} parameters; seed {}", model.params.size(), cfg.seed);
    let mut trainer = Trainer::new(cfg.clone(), model)?;

    io::create_dir(&out.join("checkpoints"))?;
    let metrics_path = out.join(METRICS_FILE);
    io::write_text(&metrics_path, "")?;
    let mut best: Option<(usize, f64)> = None;
    let reports = trainer.train(&train, &dev, |t, r| {
        checkpoint::save(&epoch_file(out, r.epoch), t)?;
        let line = serde_json::to_string(&MetricsLine::from(r)).map_err(|e| AppError::Format(e.to_string()))?;
        let mut f = OpenOptions::new()
            .append(true)
            .open(&metrics_path)
            .map_err(|e| AppError::io(&metrics_path, e))?;
        writeln!(f, "{line}").map_err(|e| AppError::io(&metrics_path, e))?;
        // best by dev accuracy, earliest on ties; the last epoch without a dev split
        match (r.dev_accuracy, best) {
            (Some(acc), Some((_, b))) if acc <= b => {}
            (Some(acc), _) => best = Some((r.epoch, acc)),
            (None, _) => best = Some((r.epoch, r.train_accuracy)),
        }
        Ok::<(), AppError>(())
    })?;
    let best_epoch = best.map_or(trainer.epoch, |(e, _)| e);
    let best_path = epoch_file(out, best_epoch);
    std::fs::copy(&best_path, out.join(MODEL_FILE)).map_err(|e| AppError::io(&best_path, e))?;
    let mut manifest = Manifest::new(&trainer, &dataset.corpus, Some(best_epoch));
    manifest.epoch = best_epoch;
    manifest.save(&out.join(MANIFEST_FILE))?;
    log::info!("best epoch {best_epoch}");
    Ok(TrainOutcome {
        reports,
        best_epoch,
        trainer,
        dataset,
    })
}

/// Rebuilds the trained model in `out` against the type file in `settings`.
pub fn load_model(settings: &Settings, out: &Path) -> Result<(Manifest, Trainer, hiram_core::corpus::Corpus)> {
    let manifest = Manifest::load(&out.join(MANIFEST_FILE))?;
    let limit = manifest.train_config()?.corpus.types_per_entity;
    let mut inventory = TypeInventory::new(limit);
    for (id, t) in io::read_types(&settings.data.types)? {
        inventory.insert(&id, &t);
    }
    let corpus = manifest.corpus(inventory)?;
    let mut trainer = manifest.trainer(&corpus)?;
    checkpoint::load_into(&out.join(MODEL_FILE), &mut trainer)?;
    Ok((manifest, trainer, corpus))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreJson {
    pub relation: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionJson {
    pub subject: String,
    pub object: String,
    pub relation: String,
    pub predicted: String,
    /// Non-NA relations in index order.
    pub confidences: Vec<ScoreJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentJson {
    pub subject: String,
    pub object: String,
    pub sentence: usize,
    pub level: usize,
    pub weights: Vec<f64>,
    /// `(subject type, object type)` index of each weight.
    pub sources: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub metric: String,
    pub setting: Option<String>,
    pub at: Option<usize>,
    pub threshold: Option<usize>,
    pub value: Option<f64>,
}

impl SummaryLine {
    fn new(metric: &str, value: Option<f64>) -> Self {
        SummaryLine {
            metric: metric.to_string(),
            setting: None,
            at: None,
            threshold: None,
            value,
        }
    }
}

pub struct Evaluation {
    pub records: Vec<PredictionRecord>,
    pub predictions: Vec<BagPrediction>,
    pub bags: Vec<PreparedBag>,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub summary: Vec<SummaryLine>,
}

fn ok_or_log(what: &str, r: hiram_core::Result<f64>) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("{what}: {e}");
            None
        }
    }
}

pub fn predict_all(model: &Hiram, bags: &[PreparedBag]) -> Result<Vec<BagPrediction>> {
    bags.iter().map(|b| model.predict(b).map_err(AppError::from)).collect()
}

/// Scores `data.test` with the model in `out` and writes predictions, the
/// summary table, the PR curve and optionally the alignment dump.
pub fn evaluate(settings: &Settings, out: &Path, dump_align: bool) -> Result<Evaluation> {
    let (manifest, trainer, corpus) = load_model(settings, out)?;
    let model = &trainer.model;
    let levels = manifest.levels;
    let (train_bags, _) = group_bags(io::read_records(&settings.data.train)?, levels);
    let (test_bags, rejected) = group_bags(io::read_records(&settings.data.test)?, levels);
    for r in &rejected {
        log::warn!("test line {}: {}", r.line, r.reason);
    }
    let (test_bags, unknown) = corpus.retain_known(test_bags);
    if unknown > 0 {
        log::warn!("dropped {unknown} test bags with relations unseen in training");
    }
    let enc = Encoder::new(&corpus, model.config.max_distance);
    let bags = enc.bags(&test_bags)?;
    if bags.is_empty() {
        return Err(AppError::Usage(format!("no test bags in {}", settings.data.test.display())));
    }

    let predictions = predict_all(model, &bags)?;
    let records: Vec<PredictionRecord> = bags
        .iter()
        .zip(&predictions)
        .map(|(b, p)| PredictionRecord::from_prediction(b, p))
        .collect();
    let correct = bags.iter().zip(&predictions).filter(|(b, p)| p.predicted == b.labels[0]).count();
    let accuracy = correct as f64 / bags.len() as f64;
    let labels = model.hierarchy.labels(0);
    io::write_jsonl(
        &out.join(PREDICTIONS_FILE),
        bags.iter().zip(&predictions).map(|(b, p)| PredictionJson {
            subject: b.key.subject.clone(),
            object: b.key.object.clone(),
            relation: b.key.relation.clone(),
            predicted: labels[p.predicted].clone(),
            confidences: labels[1..]
                .iter()
                .zip(&p.confidences[1..])
                .map(|(r, &s)| ScoreJson {
                    relation: r.clone(),
                    score: s,
                })
                .collect(),
        }),
    )?;
    if dump_align {
        let mut lines = Vec::new();
        for (b, p) in bags.iter().zip(&predictions) {
            for (j, a) in p.alignments.iter().enumerate() {
                for (level, w) in a.levels.iter().enumerate() {
                    lines.push(AlignmentJson {
                        subject: b.key.subject.clone(),
                        object: b.key.object.clone(),
                        sentence: j,
                        level,
                        weights: w.clone(),
                        sources: p.sources.clone(),
                    });
                }
            }
        }
        io::write_jsonl(&out.join(ALIGNMENTS_FILE), lines)?;
    }

    let mut summary = vec![SummaryLine::new("accuracy", Some(accuracy))];
    let auc = ok_or_log("pr_auc", pr_auc(&records));
    summary.push(SummaryLine::new("pr_auc", auc));
    if auc.is_some() {
        write_pr(&out.join(PR_FILE), &records)?;
    }
    for setting in Setting::ALL {
        let recs = if setting == Setting::All {
            records.clone()
        } else {
            let sub = subsample_bags(&bags, setting, settings.eval.seed);
            let preds = predict_all(model, &sub)?;
            sub.iter()
                .zip(&preds)
                .map(|(b, p)| PredictionRecord::from_prediction(b, p))
                .collect()
        };
        let mut values = Vec::new();
        for &n in &settings.eval.p_at_n {
            let v = ok_or_log(&format!("P@{n} ({})", setting.as_str()), precision_at_n(&recs, n));
            values.extend(v);
            summary.push(SummaryLine {
                metric: "p_at_n".into(),
                setting: Some(setting.as_str().into()),
                at: Some(n),
                threshold: None,
                value: v,
            });
        }
        let mean =
            (values.len() == settings.eval.p_at_n.len() && !values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        summary.push(SummaryLine {
            metric: "p_at_n_mean".into(),
            setting: Some(setting.as_str().into()),
            at: None,
            threshold: None,
            value: mean,
        });
    }
    let by_sentences = manifest.train_config()?.corpus.long_tail_by_sentences;
    for &threshold in &settings.eval.long_tail {
        let tail: BTreeSet<usize> = long_tail_filter(&train_bags, threshold, by_sentences)
            .iter()
            .filter_map(|r| model.hierarchy.index_of(0, r))
            .collect();
        for &k in &settings.eval.hits_k {
            summary.push(SummaryLine {
                metric: "hits_at_k".into(),
                setting: None,
                at: Some(k),
                threshold: Some(threshold),
                value: ok_or_log(&format!("Hits@{k} (<{threshold})"), hits_at_k(&records, k, &tail)),
            });
        }
    }
    io::write_jsonl(&out.join(SUMMARY_FILE), &summary)?;
    Ok(Evaluation {
        records,
        predictions,
        bags,
        accuracy,
        auc,
        summary,
    })
}

pub fn write_pr(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let curve = pr_curve(records)?;
    let mut text = String::new();
    for (r, p) in curve {
        text.push_str(&format!("{r} {p}\n"));
    }
    io::write_text(path, &text)
}

pub fn read_pr(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || AppError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `recall precision`, got `{l}`"),
            };
            let mut it = l.split_whitespace();
            let r = it.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            let p = it.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            Ok((r, p))
        })
        .collect()
}

/// Prediction file back to records; gold labels not among the scored
/// relations count as NA.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    Ok(io::read_jsonl::<PredictionJson>(path)?
        .into_iter()
        .map(|(_, p)| {
            let gold = p.confidences.iter().position(|s| s.relation == p.relation).map_or(0, |i| i + 1);
            PredictionRecord {
                key: hiram_core::corpus::BagKey {
                    subject: p.subject,
                    object: p.object,
                    relation: p.relation,
                },
                gold,
                scores: p.confidences.iter().map(|s| s.score).collect(),
            }
        })
        .collect())
}

/// Reads `predictions.jsonl` from `out` and writes the PR curve next to it.
pub fn export_pr(out: &Path) -> Result<PathBuf> {
    let records = read_predictions(&out.join(PREDICTIONS_FILE))?;
    let path = out.join(PR_FILE);
    write_pr(&path, &records)?;
    Ok(path)
}

/// Every operation check followed by the composed-model checks.
pub fn gradcheck(seed: u64, tol: f64) -> Vec<SuiteEntry> {
    let mut all = op_suite(seed, tol);
    all.extend(model_suite(seed, tol));
    all
}
