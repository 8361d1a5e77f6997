//! Context-free type-enriched word embedding.
//!
//! Words are embedded with their distances to both entities. Each entity's
//! type mentions are mean-pooled from the word table, combined into every
//! subject/object type pair, compressed to one vector by bilinear attention
//! against a global entity query, and finally gated into every word.

use alloc::vec::Vec;

use rand::Rng;

use crate::config::{ModelConfig, TypeAug};
use crate::corpus::{PreparedEntity, PreparedSentence, PAD};
use crate::error::Result;
use crate::graph::{Graph, NodeId, PoolMode};
use crate::params::{xavier_uniform, ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct EmbeddingTables {
    pub word: ParamId,
    pub pos_head: ParamId,
    pub pos_tail: ParamId,
    pub entity: ParamId,
}

/// One-hidden-layer perceptron over `[x; q]` with tanh hidden units.
/// The input weight is split so `q` can be shared by every column of `x`.
#[derive(Clone, Debug)]
pub struct TokenMlp {
    pub in_x: ParamId,
    pub in_q: ParamId,
    pub in_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl TokenMlp {
    fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        x_dim: usize,
        q_dim: usize,
        hidden: usize,
        out: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = x_dim + q_dim;
        TokenMlp {
            in_x: params.add(
                &alloc::format!("{prefix}.in_x"),
                xavier_uniform(&[hidden, x_dim], fan_in, hidden, rng),
            ),
            in_q: params.add(
                &alloc::format!("{prefix}.in_q"),
                xavier_uniform(&[hidden, q_dim], fan_in, hidden, rng),
            ),
            in_b: params.add(&alloc::format!("{prefix}.in_b"), Tensor::zeros(&[hidden])),
            out_w: params.add(&alloc::format!("{prefix}.out_w"), xavier_uniform(&[out, hidden], hidden, out, rng)),
            out_b: params.add(&alloc::format!("{prefix}.out_b"), Tensor::zeros(&[out])),
        }
    }

    /// Applies the MLP to every column of `x [d×n]` with the shared vector `q`.
    fn apply(&self, g: &mut Graph<'_>, p: &[NodeId], x: NodeId, q: NodeId) -> Result<NodeId> {
        let hx = g.matmul(p[self.in_x.index()], x)?;
        let hq = g.matmul(p[self.in_q.index()], q)?;
        let hq = g.add(hq, p[self.in_b.index()])?;
        let h = g.add_column(hx, hq)?;
        let h = g.tanh(h)?;
        let o = g.matmul(p[self.out_w.index()], h)?;
        g.add_column(o, p[self.out_b.index()])
    }
}

/// Pairwise type columns with the `(subject, object)` type indices behind each.
#[derive(Clone, Debug)]
pub struct PairwiseTypeSet {
    /// `[d_c × m]`
    pub matrix: NodeId,
    /// Row-major over `(l, k)`; a single `(0, 0)` entry in the concatenation ablation.
    pub sources: Vec<(usize, usize)>,
}

impl PairwiseTypeSet {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Everything computed once per bag from the entity pair.
#[derive(Clone, Debug)]
pub struct TypeContext {
    pub pairs: PairwiseTypeSet,
    /// Compressed type vector q^(f), `[d_c]`.
    pub compressed: NodeId,
    /// Attention of the compression over pair columns, absent in the concat ablation.
    pub compress_weights: Option<NodeId>,
}

#[derive(Clone, Debug)]
pub struct TypeEnrichment {
    pub cfg: ModelConfig,
    pub tables: EmbeddingTables,
    pub w_sem: ParamId,
    pub w_query: ParamId,
    pub gate: TokenMlp,
    pub transform: TokenMlp,
}

impl TypeEnrichment {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, vocab: usize, entities: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let (de, dp, dw) = (cfg.word_dim, cfg.pos_dim, cfg.token_dim());
        let (dt, dc) = (cfg.type_dim(), cfg.pair_dim());
        let positions = 2 * cfg.max_distance + 1;
        let mut word = xavier_uniform(&[vocab, de], vocab, de, rng);
        word.data_mut()[PAD * de..(PAD + 1) * de].fill(0.0);
        let tables = EmbeddingTables {
            word: params.add("emb.word", word),
            pos_head: params.add("emb.pos_head", xavier_uniform(&[positions, dp], positions, dp, rng)),
            pos_tail: params.add("emb.pos_tail", xavier_uniform(&[positions, dp], positions, dp, rng)),
            entity: params.add("emb.entity", xavier_uniform(&[entities, de], entities, de, rng)),
        };
        let w_sem = params.add("type.sem", xavier_uniform(&[dt, dt], dt, dt, rng));
        let w_query = params.add("type.query", xavier_uniform(&[dc, 2 * de], 2 * de, dc, rng));
        let gate = TokenMlp::new(params, "cfte.gate", dw, dc, dw, dw, rng);
        let transform = TokenMlp::new(params, "cfte.transform", dw, dc, dw, dw, rng);
        TypeEnrichment {
            cfg: cfg.clone(),
            tables,
            w_sem,
            w_query,
            gate,
            transform,
        }
    }

    /// X = [word; head distance; tail distance] per token, `[d_w × n]`.
    pub fn embed_sentence(&self, g: &mut Graph<'_>, p: &[NodeId], sent: &PreparedSentence) -> Result<NodeId> {
        let w = g.gather_rows(p[self.tables.word.index()], &sent.tokens)?;
        let dh = g.gather_rows(p[self.tables.pos_head.index()], &sent.head_pos)?;
        let dt = g.gather_rows(p[self.tables.pos_tail.index()], &sent.tail_pos)?;
        let wt = g.transpose(w)?;
        let dht = g.transpose(dh)?;
        let dtt = g.transpose(dt)?;
        g.concat(&[wt, dht, dtt])
    }

    /// Type rows t_j as `[d_e]` vectors: mean of each mention's word rows.
    pub fn type_embed(&self, g: &mut Graph<'_>, p: &[NodeId], entity: &PreparedEntity) -> Result<Vec<NodeId>> {
        entity
            .types
            .iter()
            .map(|rows| {
                let m = g.gather_rows(p[self.tables.word.index()], rows)?;
                let mt = g.transpose(m)?;
                g.pool(mt, PoolMode::Mean, 0, rows.len())
            })
            .collect()
    }

    /// Entity embedding as a `[d_e]` vector.
    pub fn entity_embed(&self, g: &mut Graph<'_>, p: &[NodeId], entity: &PreparedEntity) -> Result<NodeId> {
        let row = g.gather_rows(p[self.tables.entity.index()], &[entity.row])?;
        g.reshape(row, &[self.cfg.word_dim])
    }

    /// Type rows widened per [`TypeAug`].
    pub fn augment(&self, g: &mut Graph<'_>, types: &[NodeId], entity: NodeId) -> Result<Vec<NodeId>> {
        match self.cfg.type_aug {
            TypeAug::None => Ok(types.to_vec()),
            TypeAug::Entity => types.iter().map(|&t| g.concat(&[t, entity])).collect(),
        }
    }

    /// c_{l,k} = [t_l ⊙ (W_sem t_k) ; t_k - t_l] for every subject type l and object type k.
    pub fn pairwise_embed(&self, g: &mut Graph<'_>, p: &[NodeId], subj: &[NodeId], obj: &[NodeId]) -> Result<PairwiseTypeSet> {
        let projected: Vec<NodeId> = obj.iter().map(|&t| g.matmul(p[self.w_sem.index()], t)).collect::<Result<_>>()?;
        let mut cols = Vec::with_capacity(subj.len() * obj.len());
        let mut sources = Vec::with_capacity(subj.len() * obj.len());
        for (l, &ts) in subj.iter().enumerate() {
            for (k, &to) in obj.iter().enumerate() {
                let sem = g.hadamard(ts, projected[k])?;
                let st = g.sub(to, ts)?;
                cols.push(g.concat(&[sem, st])?);
                sources.push((l, k));
            }
        }
        let matrix = g.stack_columns(&cols)?;
        Ok(PairwiseTypeSet { matrix, sources })
    }

    /// Concatenation ablation: one column `[mean(subject types); mean(object types)]`.
    pub fn concat_embed(&self, g: &mut Graph<'_>, subj: &[NodeId], obj: &[NodeId]) -> Result<PairwiseTypeSet> {
        let ms = mean_of(g, subj)?;
        let mo = mean_of(g, obj)?;
        let c = g.concat(&[ms, mo])?;
        let matrix = g.stack_columns(&[c])?;
        Ok(PairwiseTypeSet {
            matrix,
            sources: alloc::vec![(0, 0)],
        })
    }

    /// q̃ = [e_o; mean(T_o)] - [e_s; mean(T_s)], `[2 d_e]`.
    pub fn global_query(&self, g: &mut Graph<'_>, e_s: NodeId, e_o: NodeId, t_s: &[NodeId], t_o: &[NodeId]) -> Result<NodeId> {
        let ms = mean_of(g, t_s)?;
        let mo = mean_of(g, t_o)?;
        let qs = g.concat(&[e_s, ms])?;
        let qo = g.concat(&[e_o, mo])?;
        g.sub(qo, qs)
    }

    /// q^(f) = C softmax(Cᵀ W_sa q̃); returns the vector and the weights.
    pub fn compress_types(&self, g: &mut Graph<'_>, p: &[NodeId], pairs: &PairwiseTypeSet, query: NodeId) -> Result<(NodeId, NodeId)> {
        let wq = g.matmul(p[self.w_query.index()], query)?;
        let ct = g.transpose(pairs.matrix)?;
        let scores = g.matmul(ct, wq)?;
        let weights = g.softmax(scores)?;
        let q = g.matmul(pairs.matrix, weights)?;
        Ok((q, weights))
    }

    /// v_i = g_i ⊙ x_i + (1 - g_i) ⊙ MLP([x_i; q]) with g_i = sigmoid(MLP([x_i; q])).
    pub fn enrich_words(&self, g: &mut Graph<'_>, p: &[NodeId], x: NodeId, compressed: NodeId) -> Result<NodeId> {
        let gate = self.gate.apply(g, p, x, compressed)?;
        let gate = g.sigmoid(gate)?;
        let tr = self.transform.apply(g, p, x, compressed)?;
        let diff = g.sub(x, tr)?;
        let mixed = g.hadamard(gate, diff)?;
        g.add(tr, mixed)
    }

    /// Pairwise set and compressed vector for a bag's entity pair.
    pub fn type_context(&self, g: &mut Graph<'_>, p: &[NodeId], subject: &PreparedEntity, object: &PreparedEntity) -> Result<TypeContext> {
        let t_s = self.type_embed(g, p, subject)?;
        let t_o = self.type_embed(g, p, object)?;
        let e_s = self.entity_embed(g, p, subject)?;
        let e_o = self.entity_embed(g, p, object)?;
        let a_s = self.augment(g, &t_s, e_s)?;
        let a_o = self.augment(g, &t_o, e_o)?;
        if !self.cfg.pairwise_types {
            let pairs = self.concat_embed(g, &a_s, &a_o)?;
            let compressed = g.reshape(pairs.matrix, &[self.cfg.pair_dim()])?;
            return Ok(TypeContext {
                pairs,
                compressed,
                compress_weights: None,
            });
        }
        let pairs = self.pairwise_embed(g, p, &a_s, &a_o)?;
        let query = self.global_query(g, e_s, e_o, &t_s, &t_o)?;
        let (compressed, weights) = self.compress_types(g, p, &pairs, query)?;
        Ok(TypeContext {
            pairs,
            compressed,
            compress_weights: Some(weights),
        })
    }

    /// V for one sentence; identity on X when enrichment is switched off.
    pub fn sentence(&self, g: &mut Graph<'_>, p: &[NodeId], sent: &PreparedSentence, ctx: &TypeContext) -> Result<NodeId> {
        let x = self.embed_sentence(g, p, sent)?;
        if self.cfg.cfte {
            self.enrich_words(g, p, x, ctx.compressed)
        } else {
            Ok(x)
        }
    }
}

fn mean_of(g: &mut Graph<'_>, vectors: &[NodeId]) -> Result<NodeId> {
    let m = g.stack_columns(vectors)?;
    g.pool(m, PoolMode::Mean, 0, vectors.len())
}
