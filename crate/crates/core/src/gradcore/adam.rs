use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gradcore::tensor::{Real, Tensor};
use crate::gradcore::ParamSet;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Adam with bias correction. Moments are keyed by parameter name and
/// created lazily on the first step that sees each parameter.
#[derive(Clone, Debug)]
pub struct AdamState<T: Real = f32> {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter of `params` that has an entry
    /// in `grads`. All gradients are checked for finiteness before anything
    /// is modified.
    pub fn step<P: ParamSet<T> + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &[(String, Tensor<T>)],
    ) -> Result<()> {
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Training {
                location: format!("adam step {}", self.step + 1),
                msg: format!("non-finite gradient for parameter {name}"),
            });
        }
        let by_name: BTreeMap<&str, &Tensor<T>> =
            grads.iter().map(|(n, g)| (n.as_str(), g)).collect();

        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let lr = T::from_f64(self.config.lr);
        let eps = T::from_f64(self.config.eps);
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);

        for (name, param) in params.named_tensors_mut() {
            let Some(grad) = by_name.get(name.as_str()) else {
                continue;
            };
            if grad.shape() != param.shape() {
                return Err(Error::dim(
                    format!("adam[{name}]"),
                    param.shape(),
                    grad.shape(),
                ));
            }
            let n = param.numel();
            let mom = self.moments.entry(name).or_insert_with(|| Moments {
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
            });
            for (((w, &g), m), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(mom.m.iter_mut())
                .zip(mom.v.iter_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
