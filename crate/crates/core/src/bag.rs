//! Multi-granular selective attention over the sentences of a bag and the
//! bag-level classifier.
//!
//! Sentence `j` at level `l` is scored against relation `r` as
//! `u_jᵀ diag(A_l) q_{l,r}`. Training attends with the gold relation's query
//! at every level; inference sweeps every fine relation (and its ancestors)
//! and keeps, for each relation, the probability computed under its own
//! attention.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{xavier_uniform, ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SelectiveHead {
    pub level: usize,
    pub classes: usize,
    /// One query row per class, `[classes × d_h]`.
    pub queries: ParamId,
    /// Diagonal of the bilinear score matrix, `[d_h]`.
    pub diag: ParamId,
}

impl SelectiveHead {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, level: usize, classes: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let dh = cfg.hidden_dim();
        SelectiveHead {
            level,
            classes,
            queries: params.add(&format!("sel{level}.queries"), xavier_uniform(&[classes, dh], dh, classes, rng)),
            diag: params.add(&format!("sel{level}.diag"), Tensor::filled(&[dh], 1.0)),
        }
    }

    /// Attention-weighted sum of `reps` under class `query`; returns `(b, α)`.
    pub fn attend(&self, g: &mut Graph<'_>, p: &[NodeId], reps: &[NodeId], query: usize) -> Result<(NodeId, NodeId)> {
        if reps.is_empty() {
            return Err(Error::contract("selective attention over an empty bag"));
        }
        if query >= self.classes {
            return Err(Error::contract(format!(
                "query {query} out of range for {} classes at level {}",
                self.classes, self.level
            )));
        }
        let q = g.gather_rows(p[self.queries.index()], &[query])?;
        let dh = g.value(q).numel();
        let q = g.reshape(q, &[dh])?;
        let w = g.hadamard(q, p[self.diag.index()])?;
        let u = g.stack_columns(reps)?;
        let ut = g.transpose(u)?;
        let scores = g.matmul(ut, w)?;
        let alpha = g.softmax(scores)?;
        let b = g.matmul(u, alpha)?;
        Ok((b, alpha))
    }
}

/// Affine classifier over the concatenated bag vector, fine classes out.
#[derive(Clone, Debug)]
pub struct BagClassifier {
    pub classes: usize,
    pub w: ParamId,
    pub b: ParamId,
}

impl BagClassifier {
    pub fn new<R: Rng + ?Sized>(input: usize, classes: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        BagClassifier {
            classes,
            w: params.add("bag.w", xavier_uniform(&[classes, input], input, classes, rng)),
            b: params.add("bag.b", Tensor::zeros(&[classes])),
        }
    }

    pub fn logits(&self, g: &mut Graph<'_>, p: &[NodeId], bag: NodeId) -> Result<NodeId> {
        let l = g.matmul(p[self.w.index()], bag)?;
        g.add(l, p[self.b.index()])
    }

    /// P^(bl) over fine classes.
    pub fn distribution(&self, g: &mut Graph<'_>, p: &[NodeId], bag: NodeId) -> Result<NodeId> {
        let l = self.logits(g, p, bag)?;
        g.softmax(l)
    }
}

/// b = [b^(0); …; b^(M)] where `reps[l]` holds every sentence's u^(l) and
/// `queries[l]` is the class attended to at level `l`.
pub fn bag_representation(
    g: &mut Graph<'_>,
    p: &[NodeId],
    heads: &[SelectiveHead],
    reps: &[Vec<NodeId>],
    queries: &[usize],
) -> Result<(NodeId, Vec<NodeId>)> {
    if reps.len() != heads.len() || queries.len() < heads.len() {
        return Err(Error::contract("bag_representation needs one sentence list and query per level"));
    }
    let mut parts = Vec::with_capacity(heads.len());
    let mut alphas = Vec::with_capacity(heads.len());
    for ((head, level_reps), &q) in heads.iter().zip(reps).zip(queries) {
        let (b, alpha) = head.attend(g, p, level_reps, q)?;
        parts.push(b);
        alphas.push(alpha);
    }
    let b = if parts.len() == 1 { parts[0] } else { g.concat(&parts)? };
    Ok((b, alphas))
}

/// L = L_bl + β L_sl.
pub fn total_loss(g: &mut Graph<'_>, bag_loss: NodeId, sentence_loss: Option<NodeId>, beta: f64) -> Result<NodeId> {
    if beta < 0.0 {
        return Err(Error::contract("beta must be non-negative"));
    }
    match sentence_loss {
        Some(sl) if beta != 0.0 => {
            let scaled = g.scale(sl, beta)?;
            g.add(bag_loss, scaled)
        }
        _ => Ok(bag_loss),
    }
}
