//! Piecewise convolutional sentence encoder.

use rand::Rng;

use crate::config::ModelConfig;
use crate::corpus::Span;
use crate::error::Result;
use crate::graph::{Graph, NodeId, PoolMode};
use crate::params::{xavier_uniform, ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub kernels: ParamId,
    pub bias: ParamId,
}

/// Column ranges of the three pieces. Pieces end after the last token of
/// the first and of the second entity by surface position.
pub fn segments(n: usize, head: Span, tail: Span) -> [(usize, usize); 3] {
    let (first, second) = if head.start <= tail.start { (head, tail) } else { (tail, head) };
    let a = first.end.min(n);
    let b = second.end.min(n).max(a);
    [(0, a), (a, b), (b, n)]
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, params: &mut ParamSet, rng: &mut R) -> Self {
        let (f, d, w) = (cfg.filters, cfg.token_dim(), cfg.window);
        EncoderParams {
            kernels: params.add("pcnn.kernels", xavier_uniform(&[f, d, w], d * w, f * w, rng)),
            bias: params.add("pcnn.bias", Tensor::zeros(&[f])),
        }
    }

    /// s = tanh([maxpool(H1); maxpool(H2); maxpool(H3)]) with H = conv1d(V).
    pub fn encode(&self, g: &mut Graph<'_>, p: &[NodeId], v: NodeId, head: Span, tail: Span) -> Result<NodeId> {
        let h = g.conv1d(v, p[self.kernels.index()], p[self.bias.index()])?;
        let n = g.value(v).shape()[1];
        let mut pieces = [h; 3];
        for (slot, (start, end)) in pieces.iter_mut().zip(segments(n, head, tail)) {
            *slot = g.pool(h, PoolMode::Max, start, end)?;
        }
        let s = g.concat(&pieces)?;
        g.tanh(s)
    }
}
