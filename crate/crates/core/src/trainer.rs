//! Mini-batch training with AdaDelta, dropout and L2 weight decay.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::corpus::{PreparedBag, BLANK_ROW, PAD};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{Dropout, Hiram};
use crate::optim::AdaDelta;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout mask: 0 with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask(n: usize, p: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

pub fn apply_dropout(x: &Tensor, p: f64, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::contract(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.numel(), p, rng);
    let data = x.data().iter().zip(mask).map(|(v, m)| v * m).collect();
    Tensor::new(x.shape().to_vec(), data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean bag-level loss over the epoch's batches.
    pub bag_loss: f64,
    /// Mean sentence-level loss; 0 with guidance off.
    pub sentence_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: Option<f64>,
}

impl EpochReport {
    pub fn loss(&self, beta: f64) -> f64 {
        self.bag_loss + beta * self.sentence_loss
    }
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Hiram,
    pub optimizer: AdaDelta,
    /// Epochs completed.
    pub epoch: usize,
}

/// Seeded split of `n` bag indices into `(train, dev)`.
pub fn split_dev(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let dev_n = libm::floor(n as f64 * fraction) as usize;
    if dev_n == 0 {
        return (idx, Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    idx.shuffle(&mut rng);
    let dev = idx.split_off(n - dev_n);
    idx.sort_unstable();
    let mut dev = dev;
    dev.sort_unstable();
    (idx, dev)
}

/// Fraction of bags whose predicted fine class equals the distant label.
pub fn accuracy(model: &Hiram, bags: &[PreparedBag]) -> Result<f64> {
    if bags.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for bag in bags {
        if model.predict(bag)?.predicted == bag.labels[0] {
            correct += 1;
        }
    }
    Ok(correct as f64 / bags.len() as f64)
}

impl Trainer {
    pub fn new(config: TrainConfig, model: Hiram) -> Result<Self> {
        config.validate()?;
        let optimizer = AdaDelta::new(&model.params, config.rho, config.eps, config.learning_rate);
        Ok(Trainer {
            config,
            model,
            optimizer,
            epoch: 0,
        })
    }

    /// One optimizer step on `batch`; returns `(bag loss, sentence loss)`.
    pub fn step(&mut self, batch: &[&PreparedBag], rng: &mut dyn RngCore) -> Result<(f64, f64)> {
        let (grads, bag_loss, sent_loss) = {
            let mut g = Graph::new();
            let p = self.model.params.register(&mut g);
            let mut dropout = Dropout {
                p: self.config.dropout,
                rng,
            };
            let loss = self.model.batch_loss(&mut g, &p, batch, Some(&mut dropout))?;
            let total = g.value(loss.total).item();
            if !total.is_finite() {
                return Err(Error::NonFinite(format!("loss {total}")));
            }
            let grads = g.backward(loss.total)?;
            let grads: Vec<Tensor> = p.iter().map(|&id| grads.wrt(id)).collect();
            let sl = loss.sentence.map_or(0.0, |s| g.value(s).item());
            (grads, g.value(loss.bag).item(), sl)
        };
        let grads = self.regularize(grads)?;
        self.optimizer.step(&mut self.model.params, &grads)?;
        Ok((bag_loss, sent_loss))
    }

    /// Adds λθ to every gradient except the PAD and BLANK word rows; the PAD
    /// row stays frozen.
    fn regularize(&self, mut grads: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let lambda = self.config.weight_decay;
        let word = self.model.embedding.tables.word;
        let de = self.model.config.word_dim;
        for (id, grad) in self.model.params.ids().zip(grads.iter_mut()) {
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{}`", self.model.params.name(id))));
            }
            let theta = self.model.params.get(id);
            let gd = grad.data_mut();
            if lambda != 0.0 {
                for (gv, tv) in gd.iter_mut().zip(theta.data()) {
                    *gv += lambda * tv;
                }
            }
            if id == word {
                gd[PAD * de..(PAD + 1) * de].fill(0.0);
                if lambda != 0.0 {
                    let rows = &mut gd[BLANK_ROW * de..(BLANK_ROW + 1) * de];
                    for (gv, tv) in rows.iter_mut().zip(&theta.data()[BLANK_ROW * de..(BLANK_ROW + 1) * de]) {
                        *gv -= lambda * tv;
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Runs one epoch over `train` in a seeded order.
    pub fn epoch(&mut self, train: &[PreparedBag], dev: &[PreparedBag]) -> Result<EpochReport> {
        if train.is_empty() {
            return Err(Error::contract("no training bags"));
        }
        let epoch = self.epoch + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut bag_sum, mut sent_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&PreparedBag> = chunk.iter().map(|&i| &train[i]).collect();
            let (bl, sl) = self.step(&batch, &mut rng).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
            bag_sum += bl;
            sent_sum += sl;
            batches += 1;
        }
        self.epoch = epoch;
        let train_accuracy = accuracy(&self.model, train)?;
        let dev_accuracy = if dev.is_empty() { None } else { Some(accuracy(&self.model, dev)?) };
        Ok(EpochReport {
            epoch,
            bag_loss: bag_sum / batches as f64,
            sentence_loss: sent_sum / batches as f64,
            train_accuracy,
            dev_accuracy,
        })
    }

    /// Trains for the configured number of epochs, calling `on_epoch` after each.
    pub fn train<F, E>(&mut self, train: &[PreparedBag], dev: &[PreparedBag], mut on_epoch: F) -> core::result::Result<Vec<EpochReport>, E>
    where
        F: FnMut(&Trainer, &EpochReport) -> core::result::Result<(), E>,
        E: From<Error>,
    {
        let mut reports = Vec::new();
        while self.epoch < self.config.epochs {
            let report = self.epoch(train, dev)?;
            log::info!(
                "epoch {} bag_loss {:.6} sentence_loss {:.6} train_acc {:.4}",
                report.epoch,
                report.bag_loss,
                report.sentence_loss,
                report.train_accuracy
            );
            on_epoch(self, &report)?;
            reports.push(report);
        }
        Ok(reports)
    }
}
