//! Relation-guided type-sentence alignment, one untied head per relation level.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{xavier_uniform, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Parameters of the alignment, integration and sentence classifier at one level.
#[derive(Clone, Debug)]
pub struct AlignmentHead {
    pub level: usize,
    pub classes: usize,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub bilinear: ParamId,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
    pub ln_gain: ParamId,
    pub ln_shift: ParamId,
    pub cls_w: ParamId,
    pub cls_b: ParamId,
}

/// Output of one head for one sentence.
#[derive(Clone, Copy, Debug)]
pub struct LevelOutput {
    /// u^(l), `[d_h]`
    pub rep: NodeId,
    /// a^(l), `[m]`
    pub weights: NodeId,
}

/// All levels of one sentence and their concatenation u^(h).
#[derive(Clone, Debug)]
pub struct AlignedSentence {
    pub levels: Vec<LevelOutput>,
    pub hier: NodeId,
}

impl AlignmentHead {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, level: usize, classes: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let (dh, dc) = (cfg.hidden_dim(), cfg.pair_dim());
        let name = |s: &str| format!("align{level}.{s}");
        AlignmentHead {
            level,
            classes,
            proj_w: params.add(&name("proj_w"), xavier_uniform(&[dh, dc], dc, dh, rng)),
            proj_b: params.add(&name("proj_b"), Tensor::zeros(&[dh])),
            bilinear: params.add(&name("bilinear"), xavier_uniform(&[dh, dh], dh, dh, rng)),
            gate_w: params.add(&name("gate_w"), xavier_uniform(&[dh, 2 * dh], 2 * dh, dh, rng)),
            gate_b: params.add(&name("gate_b"), Tensor::zeros(&[dh])),
            ln_gain: params.add(&name("ln_gain"), Tensor::filled(&[dh], 1.0)),
            ln_shift: params.add(&name("ln_shift"), Tensor::zeros(&[dh])),
            cls_w: params.add(&name("cls_w"), xavier_uniform(&[classes, dh], dh, classes, rng)),
            cls_b: params.add(&name("cls_b"), Tensor::zeros(&[classes])),
        }
    }

    /// C̃ = tanh(W_p C + b_p), `[d_h × m]`. Independent of the sentence, so
    /// callers compute it once per bag.
    pub fn project(&self, g: &mut Graph<'_>, p: &[NodeId], pairs: NodeId) -> Result<NodeId> {
        let c = g.matmul(p[self.proj_w.index()], pairs)?;
        let c = g.add_column(c, p[self.proj_b.index()])?;
        g.tanh(c)
    }

    /// a = softmax(C̃ᵀ W_al s) for an already projected C̃.
    pub fn align_projected(&self, g: &mut Graph<'_>, p: &[NodeId], s: NodeId, projected: NodeId) -> Result<NodeId> {
        let ws = g.matmul(p[self.bilinear.index()], s)?;
        let ct = g.transpose(projected)?;
        let scores = g.matmul(ct, ws)?;
        g.softmax(scores)
    }

    /// Projects the pair columns and aligns the sentence with them; returns `(a, C̃)`.
    pub fn align(&self, g: &mut Graph<'_>, p: &[NodeId], s: NodeId, pairs: NodeId) -> Result<(NodeId, NodeId)> {
        let projected = self.project(g, p, pairs)?;
        let a = self.align_projected(g, p, s, projected)?;
        Ok((a, projected))
    }

    /// z = C̃ a; g = sigmoid(W_g [s; z] + b_g); ũ = g ⊙ s + (1 - g) ⊙ z; u = LayerNorm(s + ũ).
    pub fn integrate(&self, g: &mut Graph<'_>, p: &[NodeId], a: NodeId, projected: NodeId, s: NodeId) -> Result<NodeId> {
        let z = g.matmul(projected, a)?;
        let sz = g.concat(&[s, z])?;
        let gate = g.matmul(p[self.gate_w.index()], sz)?;
        let gate = g.add(gate, p[self.gate_b.index()])?;
        let gate = g.sigmoid(gate)?;
        let diff = g.sub(s, z)?;
        let mixed = g.hadamard(gate, diff)?;
        let u_tilde = g.add(z, mixed)?;
        let residual = g.add(s, u_tilde)?;
        g.layer_norm(residual, p[self.ln_gain.index()], p[self.ln_shift.index()])
    }

    /// Unnormalized scores of the sentence classifier at this level.
    pub fn sentence_logits(&self, g: &mut Graph<'_>, p: &[NodeId], u: NodeId) -> Result<NodeId> {
        let l = g.matmul(p[self.cls_w.index()], u)?;
        g.add(l, p[self.cls_b.index()])
    }

    /// P^(sl)(r | u) over this level's classes.
    pub fn sentence_distribution(&self, g: &mut Graph<'_>, p: &[NodeId], u: NodeId) -> Result<NodeId> {
        let l = self.sentence_logits(g, p, u)?;
        g.softmax(l)
    }
}

/// Runs every head on `s` and concatenates the level representations.
/// `projected[l]` is head `l`'s C̃ for the bag.
pub fn hier_align(g: &mut Graph<'_>, p: &[NodeId], heads: &[AlignmentHead], s: NodeId, projected: &[NodeId]) -> Result<AlignedSentence> {
    if heads.is_empty() || heads.len() != projected.len() {
        return Err(Error::contract("one projected type set per head required"));
    }
    let mut levels = Vec::with_capacity(heads.len());
    for (head, &proj) in heads.iter().zip(projected) {
        let weights = head.align_projected(g, p, s, proj)?;
        let rep = head.integrate(g, p, weights, proj, s)?;
        levels.push(LevelOutput { rep, weights });
    }
    let reps: Vec<NodeId> = levels.iter().map(|l| l.rep).collect();
    let hier = if reps.len() == 1 { reps[0] } else { g.concat(&reps)? };
    Ok(AlignedSentence { levels, hier })
}

/// Sum over levels of `-log P^(sl)(r^(l) | u^(l))` for one sentence.
pub fn sentence_loss(
    g: &mut Graph<'_>,
    p: &[NodeId],
    heads: &[AlignmentHead],
    aligned: &AlignedSentence,
    labels: &[usize],
) -> Result<NodeId> {
    if labels.len() < heads.len() {
        return Err(Error::contract(format!("{} labels for {} levels", labels.len(), heads.len())));
    }
    let mut terms = Vec::with_capacity(heads.len());
    for ((head, out), &label) in heads.iter().zip(&aligned.levels).zip(labels) {
        if label >= head.classes {
            return Err(Error::contract(format!(
                "label {label} out of range for {} classes at level {}",
                head.classes, head.level
            )));
        }
        let logits = head.sentence_logits(g, p, out.rep)?;
        terms.push(g.cross_entropy(logits, label)?);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(total)
}
