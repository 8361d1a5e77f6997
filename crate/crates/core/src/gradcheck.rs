//! Central finite-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Perturbation used for the central differences.
pub const STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so coordinates whose gradient is
/// essentially zero are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
    pub max_rel_error: f64,
    /// Input tensor and flat coordinate where the worst deviation occurred.
    pub worst_input: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
    pub tol: f64,
    pub passed: bool,
}

fn rel_error(a: f64, n: f64) -> f64 {
    let denom = libm::fabs(a).max(libm::fabs(n)).max(REL_FLOOR);
    libm::fabs(a - n) / denom
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    let v = g.value(out);
    if v.numel() != 1 {
        return Err(Error::contract("grad_check function must be scalar-valued"));
    }
    Ok(v.item())
}

/// Checks the gradient of a scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, NodeId) -> Result<NodeId>,
{
    grad_check_many(|g, ids| f(g, ids[0]), core::slice::from_ref(x), tol)
}

/// Checks the gradient of a scalar function of several tensors, every
/// coordinate of every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    grad_check_subset(f, inputs, tol, usize::MAX)
}

/// Like [`grad_check_many`] but probes at most `per_input` evenly spaced
/// coordinates of each input.
pub fn grad_check_subset<F>(f: F, inputs: &[Tensor], tol: f64, per_input: usize) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        let grads = g.backward(out)?;
        ids.iter().map(|&id| grads.wrt(id)).collect()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
        tol,
        passed: true,
    };
    let mut probe = inputs.to_vec();
    for (t, grad) in analytic.iter().enumerate() {
        let n = inputs[t].numel();
        let stride = if per_input == 0 || n <= per_input {
            1
        } else {
            n.div_ceil(per_input)
        };
        for i in (0..n).step_by(stride) {
            let orig = inputs[t].data()[i];
            probe[t].data_mut()[i] = orig + STEP;
            let plus = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = orig - STEP;
            let minus = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = grad.data()[i];
            let err = rel_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = err;
                report.worst_input = t;
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}

/// Named result of one check in [`suite`].
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub report: Result<GradCheckReport>,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        matches!(&self.report, Ok(r) if r.passed)
    }
}

/// Gradient checks for every differentiable tensor operation on random
/// inputs in `[-1, 1]` with extents of at most 8.
pub fn op_suite(seed: u64, tol: f64) -> Vec<SuiteEntry> {
    use alloc::string::ToString;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand_t = |shape: &[usize]| {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape")
    };
    // Weighted sums keep the loss sensitive to every output coordinate.
    fn weigh(g: &mut Graph<'_>, y: NodeId) -> Result<NodeId> {
        let shape = g.value(y).shape().to_vec();
        let n: usize = shape.iter().product();
        let w = (0..n).map(|i| 0.5 + (i % 7) as f64 * 0.25).collect();
        let w = g.constant(Tensor::new(shape, w)?);
        let p = g.hadamard(y, w)?;
        g.sum(p)
    }

    let mut out = Vec::new();
    let mut push = |name: &str, report: Result<GradCheckReport>| {
        out.push(SuiteEntry {
            name: name.to_string(),
            report,
        })
    };

    let (a, b) = (rand_t(&[3, 5]), rand_t(&[5, 4]));
    push(
        "matmul",
        grad_check_many(
            |g, x| {
                let y = g.matmul(x[0], x[1])?;
                weigh(g, y)
            },
            &[a.clone(), b],
            tol,
        ),
    );
    let v = rand_t(&[5]);
    push(
        "matvec",
        grad_check_many(
            |g, x| {
                let y = g.matmul(x[0], x[1])?;
                weigh(g, y)
            },
            &[a.clone(), v],
            tol,
        ),
    );
    push(
        "transpose",
        grad_check(
            |g, x| {
                let y = g.transpose(x)?;
                weigh(g, y)
            },
            &a,
            tol,
        ),
    );
    let (p, q) = (rand_t(&[2, 6]), rand_t(&[2, 6]));
    push(
        "add",
        grad_check_many(
            |g, x| {
                let y = g.add(x[0], x[1])?;
                weigh(g, y)
            },
            &[p.clone(), q.clone()],
            tol,
        ),
    );
    push(
        "sub",
        grad_check_many(
            |g, x| {
                let y = g.sub(x[0], x[1])?;
                weigh(g, y)
            },
            &[p.clone(), q.clone()],
            tol,
        ),
    );
    push(
        "hadamard",
        grad_check_many(
            |g, x| {
                let y = g.hadamard(x[0], x[1])?;
                weigh(g, y)
            },
            &[p.clone(), q],
            tol,
        ),
    );
    push(
        "scale",
        grad_check(
            |g, x| {
                let y = g.scale(x, -1.7)?;
                weigh(g, y)
            },
            &p,
            tol,
        ),
    );
    push(
        "add_scalar",
        grad_check(
            |g, x| {
                let y = g.add_scalar(x, 0.3)?;
                weigh(g, y)
            },
            &p,
            tol,
        ),
    );
    push(
        "sigmoid",
        grad_check(
            |g, x| {
                let y = g.sigmoid(x)?;
                weigh(g, y)
            },
            &p,
            tol,
        ),
    );
    push(
        "tanh",
        grad_check(
            |g, x| {
                let y = g.tanh(x)?;
                weigh(g, y)
            },
            &p,
            tol,
        ),
    );
    let s = rand_t(&[7]);
    push(
        "softmax",
        grad_check(
            |g, x| {
                let y = g.softmax(x)?;
                weigh(g, y)
            },
            &s,
            tol,
        ),
    );
    push("cross_entropy", grad_check(|g, x| g.cross_entropy(x, 3), &s, tol));
    let (seq, ker, bias) = (rand_t(&[4, 6]), rand_t(&[3, 4, 3]), rand_t(&[3]));
    push(
        "conv1d",
        grad_check_many(
            |g, x| {
                let y = g.conv1d(x[0], x[1], x[2])?;
                weigh(g, y)
            },
            &[seq.clone(), ker, bias],
            tol,
        ),
    );
    push(
        "pool_max",
        grad_check(
            |g, x| {
                let y = g.pool(x, crate::PoolMode::Max, 1, 5)?;
                weigh(g, y)
            },
            &seq,
            tol,
        ),
    );
    push(
        "pool_mean",
        grad_check(
            |g, x| {
                let y = g.pool(x, crate::PoolMode::Mean, 0, 4)?;
                weigh(g, y)
            },
            &seq,
            tol,
        ),
    );
    let (ln_x, ln_g, ln_b) = (rand_t(&[8]), rand_t(&[8]), rand_t(&[8]));
    push(
        "layer_norm",
        grad_check_many(
            |g, x| {
                let y = g.layer_norm(x[0], x[1], x[2])?;
                weigh(g, y)
            },
            &[ln_x, ln_g, ln_b],
            tol,
        ),
    );
    let (c1, c2) = (rand_t(&[3]), rand_t(&[5]));
    push(
        "concat",
        grad_check_many(
            |g, x| {
                let y = g.concat(x)?;
                weigh(g, y)
            },
            &[c1.clone(), c2],
            tol,
        ),
    );
    let (m1, m2) = (rand_t(&[2, 3]), rand_t(&[4, 3]));
    push(
        "concat_rows",
        grad_check_many(
            |g, x| {
                let y = g.concat(x)?;
                weigh(g, y)
            },
            &[m1, m2],
            tol,
        ),
    );
    let (k1, k2) = (rand_t(&[3]), rand_t(&[3]));
    push(
        "stack_columns",
        grad_check_many(
            |g, x| {
                let y = g.stack_columns(x)?;
                weigh(g, y)
            },
            &[c1, k1, k2],
            tol,
        ),
    );
    let table = rand_t(&[6, 4]);
    push(
        "gather_rows",
        grad_check(
            |g, x| {
                let y = g.gather_rows(x, &[2, 0, 2, 5])?;
                weigh(g, y)
            },
            &table,
            tol,
        ),
    );
    let col = rand_t(&[3]);
    push(
        "add_column",
        grad_check_many(
            |g, x| {
                let y = g.add_column(x[0], x[1])?;
                weigh(g, y)
            },
            &[a.clone(), col],
            tol,
        ),
    );
    push(
        "reshape",
        grad_check(
            |g, x| {
                let y = g.reshape(x, &[5, 3])?;
                weigh(g, y)
            },
            &a,
            tol,
        ),
    );
    push("sum", grad_check(|g, x| g.sum(x), &a, tol));
    out
}

fn toy_record(tokens: &[&str], head: (usize, &str), tail: (usize, &str), relation: &str) -> crate::corpus::RawRecord {
    use crate::corpus::{EntityMention, RawRecord, Span};
    use alloc::string::ToString;
    RawRecord {
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
        head: EntityMention {
            id: head.1.to_string(),
            span: Span::new(head.0, head.0 + 1),
        },
        tail: EntityMention {
            id: tail.1.to_string(),
            span: Span::new(tail.0, tail.0 + 1),
        },
        relation: relation.to_string(),
    }
}

/// Toy two-bag dataset: one bag of two 3- and 4-token sentences, one
/// single-sentence bag, two types per entity, one coarse level.
pub fn toy_dataset() -> Result<crate::corpus::Dataset> {
    use alloc::string::ToString;
    use alloc::vec;
    let train = vec![
        toy_record(&["a", "founded", "b"], (0, "e1"), (2, "e2"), "/org/founder"),
        toy_record(&["b", "was", "by", "a"], (3, "e1"), (0, "e2"), "/org/founder"),
        toy_record(&["c", "in", "d"], (0, "e3"), (2, "e4"), "/loc/contains"),
    ];
    let types = vec![
        ("e1".to_string(), vec!["/people/person".to_string(), "/org.founder".to_string()]),
        ("e2".to_string(), vec!["/org/company".to_string()]),
        ("e3".to_string(), vec!["/loc/city".to_string(), "/loc/place".to_string()]),
        ("e4".to_string(), vec!["/loc/country".to_string()]),
    ];
    let corpus = crate::config::CorpusConfig {
        types_per_entity: 2,
        min_word_freq: 1,
        long_tail_by_sentences: true,
    };
    crate::corpus::Dataset::build(train.into_iter().enumerate(), vec![], types, &corpus, 1, 4)
}

/// Model configuration used by [`model_suite`]: every axis at most 8 wide
/// except the concatenated level representations.
pub fn toy_model_config() -> crate::config::ModelConfig {
    crate::config::ModelConfig {
        word_dim: 2,
        pos_dim: 1,
        filters: 2,
        window: 3,
        levels: 1,
        max_distance: 4,
        ..crate::config::ModelConfig::default()
    }
}

/// Checks the total training loss of the composed model with respect to
/// every parameter, once per preset.
pub fn model_suite(seed: u64, tol: f64) -> Vec<SuiteEntry> {
    use crate::config::Preset;
    use alloc::string::ToString;
    let mut out = Vec::new();
    let data = match toy_dataset() {
        Ok(d) => d,
        Err(e) => {
            out.push(SuiteEntry {
                name: "model/dataset".to_string(),
                report: Err(e),
            });
            return out;
        }
    };
    for preset in [
        Preset::Full,
        Preset::NoHierarchy,
        Preset::NoCfte,
        Preset::NoGuidance,
        Preset::TypeConcat,
    ] {
        let mut cfg = toy_model_config();
        cfg.apply_preset(preset);
        let name = alloc::format!("model/{}", preset.as_str());
        let report = crate::model::Hiram::new(
            &cfg,
            data.corpus.vocab.len(),
            data.corpus.entities.len(),
            &data.corpus.hierarchy,
            seed,
        )
        .and_then(|model| {
            let bags: Vec<&crate::corpus::PreparedBag> = data.train.iter().collect();
            grad_check_many(
                |g, ids| model.batch_loss(g, ids, &bags, None).map(|l| l.total),
                model.params.tensors(),
                tol,
            )
        });
        out.push(SuiteEntry { name, report });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let r = grad_check(
            |g, x| {
                let y = g.hadamard(x, x)?;
                g.sum(y)
            },
            &Tensor::vector(alloc::vec![3.0]),
            1e-4,
        )
        .unwrap();
        assert!(r.passed);
        assert!(libm::fabs(r.analytic - 6.0) < 1e-12);
        assert!(libm::fabs(r.numeric - 6.0) < 1e-6);
    }

    #[test]
    fn layer_norm_sum_passes() {
        let x = Tensor::vector(alloc::vec![0.3, -0.8, 0.1, 0.9, -0.2]);
        let gain = Tensor::vector(alloc::vec![1.0, 0.5, -0.7, 1.3, 0.2]);
        let shift = Tensor::zeros(&[5]);
        let r = grad_check_many(
            |g, x| {
                let y = g.layer_norm(x[0], x[1], x[2])?;
                let w = g.constant(Tensor::vector(alloc::vec![1.0, 2.0, 3.0, 4.0, 5.0]));
                let p = g.hadamard(y, w)?;
                g.sum(p)
            },
            &[x, gain, shift],
            1e-4,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_rule_fails() {
        // sin with the derivative of cos: wrong sign and phase
        let r = grad_check(
            |g, x| {
                let y = g.custom_unary(x, libm::sin, |v| -libm::sin(v))?;
                g.sum(y)
            },
            &Tensor::vector(alloc::vec![0.4, -0.9, 1.2]),
            1e-4,
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn correct_custom_rule_passes() {
        let r = grad_check(
            |g, x| {
                let y = g.custom_unary(x, libm::sin, libm::cos)?;
                g.sum(y)
            },
            &Tensor::vector(alloc::vec![0.4, -0.9, 1.2]),
            1e-4,
        )
        .unwrap();
        assert!(r.passed);
    }

    #[test]
    fn chained_matmul_softmax() {
        let a = Tensor::from_rows(&[&[0.2, -0.5, 0.7], &[0.9, 0.1, -0.3]]).unwrap();
        let v = Tensor::vector(alloc::vec![0.6, -0.4]);
        let r = grad_check_many(
            |g, x| {
                let at = g.transpose(x[0])?;
                let s = g.matmul(at, x[1])?;
                let p = g.softmax(s)?;
                let w = g.constant(Tensor::vector(alloc::vec![1.0, -2.0, 0.5]));
                let y = g.hadamard(p, w)?;
                g.sum(y)
            },
            &[a, v],
            1e-4,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn every_op_passes() {
        for entry in op_suite(7, 1e-4) {
            assert!(entry.passed(), "{}: {:?}", entry.name, entry.report);
        }
    }

    #[test]
    fn composed_model_passes() {
        let entries = model_suite(3, 1e-4);
        assert_eq!(entries.len(), 5);
        for entry in entries {
            assert!(entry.passed(), "{}: {:?}", entry.name, entry.report);
        }
    }
}
