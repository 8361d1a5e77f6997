//! The full model: type-enriched embedding, piecewise encoder, hierarchical
//! alignment heads, selective attention and the bag classifier.

use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::{hier_align, sentence_loss, AlignedSentence, AlignmentHead};
use crate::bag::{bag_representation, total_loss, BagClassifier, SelectiveHead};
use crate::config::ModelConfig;
use crate::corpus::{PreparedBag, RelationHierarchy};
use crate::embedding::{TypeContext, TypeEnrichment};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamSet;
use crate::pcnn::EncoderParams;
use crate::tensor::Tensor;
use crate::trainer::dropout_mask;

/// Training-time dropout: probability and the stream masks are drawn from.
pub struct Dropout<'r> {
    pub p: f64,
    pub rng: &'r mut dyn RngCore,
}

impl Dropout<'_> {
    fn apply(&mut self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        if self.p == 0.0 {
            return Ok(x);
        }
        let shape = g.value(x).shape().to_vec();
        let n = g.value(x).numel();
        let mask = g.constant(Tensor::new(shape, dropout_mask(n, self.p, self.rng))?);
        g.hadamard(x, mask)
    }
}

#[derive(Clone, Debug)]
pub struct Hiram {
    pub config: ModelConfig,
    /// Truncated to the levels actually modelled.
    pub hierarchy: RelationHierarchy,
    pub params: ParamSet,
    pub embedding: TypeEnrichment,
    pub encoder: EncoderParams,
    pub align: Vec<AlignmentHead>,
    pub select: Vec<SelectiveHead>,
    pub classifier: BagClassifier,
}

/// Sentence side of one bag.
#[derive(Clone, Debug)]
pub struct EncodedBag {
    pub context: TypeContext,
    /// s per sentence, after dropout.
    pub sentences: Vec<NodeId>,
    pub aligned: Vec<AlignedSentence>,
    /// `reps[l][j]` is u^(l) of sentence `j` as fed to selective attention.
    pub reps: Vec<Vec<NodeId>>,
}

#[derive(Clone, Copy, Debug)]
pub struct BagLoss {
    /// -log P^(bl)(gold)
    pub bag: NodeId,
    /// Sentence-level loss summed over the bag's sentences and levels.
    pub sentence: Option<NodeId>,
    pub sentences: usize,
    pub logits: NodeId,
}

#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub total: NodeId,
    pub bag: NodeId,
    pub sentence: Option<NodeId>,
    pub logits: Vec<NodeId>,
}

/// Alignment distributions of one sentence, one vector per level.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceAlignment {
    pub levels: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagPrediction {
    /// Confidence per fine class, each under its own attention query.
    pub confidences: Vec<f64>,
    pub predicted: usize,
    /// Subject/object type indices of each pairwise column.
    pub sources: Vec<(usize, usize)>,
    pub alignments: Vec<SentenceAlignment>,
    pub compress_weights: Option<Vec<f64>>,
}

impl Hiram {
    pub fn new(config: &ModelConfig, vocab: usize, entities: usize, hierarchy: &RelationHierarchy, seed: u64) -> Result<Self> {
        let levels = config.effective_levels();
        if hierarchy.coarse_levels() < levels {
            return Err(Error::Config(alloc::format!(
                "model needs {levels} coarse levels but the hierarchy has {}",
                hierarchy.coarse_levels()
            )));
        }
        if config.window.is_multiple_of(2) || config.filters == 0 || config.word_dim == 0 {
            return Err(Error::Config("filters and word_dim must be positive and window odd".into()));
        }
        let hierarchy = hierarchy.truncated(levels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let embedding = TypeEnrichment::new(config, vocab, entities, &mut params, &mut rng);
        let encoder = EncoderParams::new(config, &mut params, &mut rng);
        let align = (0..=levels)
            .map(|l| AlignmentHead::new(config, l, hierarchy.class_count(l), &mut params, &mut rng))
            .collect();
        let select = (0..=levels)
            .map(|l| SelectiveHead::new(config, l, hierarchy.class_count(l), &mut params, &mut rng))
            .collect();
        let classifier = BagClassifier::new((levels + 1) * config.hidden_dim(), hierarchy.class_count(0), &mut params, &mut rng);
        Ok(Hiram {
            config: config.clone(),
            hierarchy,
            params,
            embedding,
            encoder,
            align,
            select,
            classifier,
        })
    }

    /// Levels modelled, fine level included.
    pub fn levels(&self) -> usize {
        self.align.len()
    }

    pub fn fine_classes(&self) -> usize {
        self.hierarchy.class_count(0)
    }

    pub fn encode_bag(
        &self,
        g: &mut Graph<'_>,
        p: &[NodeId],
        bag: &PreparedBag,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<EncodedBag> {
        if bag.sentences.is_empty() {
            return Err(Error::contract("bag without sentences"));
        }
        let context = self.embedding.type_context(g, p, &bag.subject, &bag.object)?;
        let projected: Vec<NodeId> = self
            .align
            .iter()
            .map(|h| h.project(g, p, context.pairs.matrix))
            .collect::<Result<_>>()?;
        let mut sentences = Vec::with_capacity(bag.sentences.len());
        let mut aligned = Vec::with_capacity(bag.sentences.len());
        let mut reps = vec![Vec::with_capacity(bag.sentences.len()); self.levels()];
        for sent in &bag.sentences {
            let v = self.embedding.sentence(g, p, sent, &context)?;
            let mut s = self.encoder.encode(g, p, v, sent.head, sent.tail)?;
            if let Some(d) = dropout.as_deref_mut() {
                s = d.apply(g, s)?;
            }
            let a = hier_align(g, p, &self.align, s, &projected)?;
            for (l, out) in a.levels.iter().enumerate() {
                let mut u = out.rep;
                if let Some(d) = dropout.as_deref_mut() {
                    u = d.apply(g, u)?;
                }
                reps[l].push(u);
            }
            sentences.push(s);
            aligned.push(a);
        }
        Ok(EncodedBag {
            context,
            sentences,
            aligned,
            reps,
        })
    }

    fn gold(&self, bag: &PreparedBag) -> Result<Vec<usize>> {
        let levels = self.levels();
        if bag.labels.len() < levels {
            return Err(Error::contract(alloc::format!(
                "bag has {} labels, model has {levels} levels",
                bag.labels.len()
            )));
        }
        for (l, &label) in bag.labels[..levels].iter().enumerate() {
            if label >= self.hierarchy.class_count(l) {
                return Err(Error::contract(alloc::format!("label {label} out of range at level {l}")));
            }
        }
        Ok(bag.labels[..levels].to_vec())
    }

    /// Bag loss under the gold attention queries, plus the summed sentence loss.
    pub fn bag_loss(&self, g: &mut Graph<'_>, p: &[NodeId], bag: &PreparedBag, dropout: Option<&mut Dropout<'_>>) -> Result<BagLoss> {
        let labels = self.gold(bag)?;
        let enc = self.encode_bag(g, p, bag, dropout)?;
        let (b, _) = bag_representation(g, p, &self.select, &enc.reps, &labels)?;
        let logits = self.classifier.logits(g, p, b)?;
        let nll = g.cross_entropy(logits, labels[0])?;
        let sentence = if self.config.guidance {
            let mut acc: Option<NodeId> = None;
            for a in &enc.aligned {
                let l = sentence_loss(g, p, &self.align, a, &labels)?;
                acc = Some(match acc {
                    Some(prev) => g.add(prev, l)?,
                    None => l,
                });
            }
            acc
        } else {
            None
        };
        Ok(BagLoss {
            bag: nll,
            sentence,
            sentences: bag.sentences.len(),
            logits,
        })
    }

    /// L = mean bag NLL + β · (sentence loss / sentences in the batch).
    pub fn batch_loss(
        &self,
        g: &mut Graph<'_>,
        p: &[NodeId],
        bags: &[&PreparedBag],
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<BatchLoss> {
        if bags.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let mut bag_terms = Vec::with_capacity(bags.len());
        let mut sent_terms = Vec::new();
        let mut sentences = 0;
        let mut logits = Vec::with_capacity(bags.len());
        for bag in bags {
            let l = self.bag_loss(g, p, bag, dropout.as_deref_mut())?;
            bag_terms.push(l.bag);
            sent_terms.extend(l.sentence);
            sentences += l.sentences;
            logits.push(l.logits);
        }
        let bag_sum = sum_nodes(g, &bag_terms)?;
        let bag_mean = g.scale(bag_sum, 1.0 / bags.len() as f64)?;
        let sentence = if sent_terms.is_empty() {
            None
        } else {
            let s = sum_nodes(g, &sent_terms)?;
            Some(g.scale(s, 1.0 / sentences as f64)?)
        };
        let total = total_loss(g, bag_mean, sentence, self.config.beta)?;
        Ok(BatchLoss {
            total,
            bag: bag_mean,
            sentence,
            logits,
        })
    }

    /// Inference: every fine class is scored under its own attention queries.
    pub fn predict(&self, bag: &PreparedBag) -> Result<BagPrediction> {
        let mut g = Graph::new();
        let p = self.params.register(&mut g);
        let enc = self.encode_bag(&mut g, &p, bag, None)?;
        let k = self.fine_classes();
        let mut confidences = Vec::with_capacity(k);
        for r in 0..k {
            let queries = self.hierarchy.ancestors(r);
            let (b, _) = bag_representation(&mut g, &p, &self.select, &enc.reps, &queries)?;
            let dist = self.classifier.distribution(&mut g, &p, b)?;
            confidences.push(g.value(dist).data()[r]);
        }
        let predicted = argmax(&confidences);
        let alignments = enc
            .aligned
            .iter()
            .map(|a| SentenceAlignment {
                levels: a.levels.iter().map(|l| g.value(l.weights).data().to_vec()).collect(),
            })
            .collect();
        Ok(BagPrediction {
            confidences,
            predicted,
            sources: enc.context.pairs.sources.clone(),
            alignments,
            compress_weights: enc.context.compress_weights.map(|w| g.value(w).data().to_vec()),
        })
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn sum_nodes(g: &mut Graph<'_>, nodes: &[NodeId]) -> Result<NodeId> {
    let mut acc = nodes[0];
    for &n in &nodes[1..] {
        acc = g.add(acc, n)?;
    }
    Ok(acc)
}
