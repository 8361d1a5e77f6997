//! AdaDelta.

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
    /// η, multiplies every update.
    pub lr: f64,
    /// E[g²] per parameter.
    pub sq_grad: ParamSet,
    /// E[Δ²] per parameter.
    pub sq_delta: ParamSet,
}

impl AdaDelta {
    pub fn new(params: &ParamSet, rho: f64, eps: f64, lr: f64) -> Self {
        AdaDelta {
            rho,
            eps,
            lr,
            sq_grad: params.zeros_like(),
            sq_delta: params.zeros_like(),
        }
    }

    /// Updates every parameter with its gradient; `grads` is indexed like `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.sq_grad.len() != params.len() {
            return Err(Error::contract("gradient count does not match parameters"));
        }
        for (id, grad) in params.ids().zip(grads) {
            let (eg, ed) = (self.sq_grad.get_mut(id), self.sq_delta.get_mut(id));
            adadelta_step(params.get_mut(id), grad, eg, ed, self.rho, self.eps, self.lr)?;
        }
        Ok(())
    }
}

/// One elementwise AdaDelta update of `param` in place.
pub fn adadelta_step(
    param: &mut Tensor,
    grad: &Tensor,
    sq_grad: &mut Tensor,
    sq_delta: &mut Tensor,
    rho: f64,
    eps: f64,
    lr: f64,
) -> Result<()> {
    for other in [grad.shape(), sq_grad.shape(), sq_delta.shape()] {
        if other != param.shape() {
            return Err(Error::shape("adadelta_step", param.shape(), other));
        }
    }
    let g = grad.data();
    let eg = sq_grad.data_mut();
    let ed = sq_delta.data_mut();
    for (i, x) in param.data_mut().iter_mut().enumerate() {
        eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
        let delta = -lr * libm::sqrt(ed[i] + eps) / libm::sqrt(eg[i] + eps) * g[i];
        ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
        *x += delta;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Tensor {
        Tensor::vector(alloc::vec![v])
    }

    #[test]
    fn first_step_magnitude() {
        let (mut x, mut eg, mut ed) = (one(0.0), one(0.0), one(0.0));
        adadelta_step(&mut x, &one(1.0), &mut eg, &mut ed, 0.95, 1e-6, 0.1).unwrap();
        let expected = -0.1 * (1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((x.data()[0] - expected).abs() < 1e-15);
        assert!((x.data()[0] + 4.47e-4).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let (mut x, mut eg, mut ed) = (one(2.0), one(0.5), one(0.25));
        adadelta_step(&mut x, &one(0.0), &mut eg, &mut ed, 0.95, 1e-6, 0.1).unwrap();
        assert_eq!(x.data()[0], 2.0);
        assert!((eg.data()[0] - 0.475).abs() < 1e-15);
        assert!((ed.data()[0] - 0.2375).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let (mut x, mut eg, mut ed) = (one(0.0), one(0.0), one(0.0));
        assert!(adadelta_step(&mut x, &Tensor::zeros(&[2]), &mut eg, &mut ed, 0.95, 1e-6, 0.1).is_err());
    }
}
