//! Adam optimizer and the cosine annealing learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::real::Real;

/// Adam with bias correction. Moment buffers are aligned with the parameter
/// store by index; frozen or untouched parameters simply never receive a
/// gradient and keep their moments at rest.
#[derive(Debug, Clone)]
pub struct Adam<E> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<Vec<E>>,
    pub v: Vec<Vec<E>>,
    pub step: usize,
}

impl<E: Real> Adam<E> {
    pub fn new(store: &ParamStore<E>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let m = store.iter().map(|(_, p)| vec![E::ZERO; p.value.numel()]).collect();
        let v = store.iter().map(|(_, p)| vec![E::ZERO; p.value.numel()]).collect();
        Adam {
            beta1,
            beta2,
            epsilon,
            m,
            v,
            step: 0,
        }
    }

    /// One update over every trainable parameter that received a gradient.
    /// The step counter always advances; zero gradients leave parameters
    /// unchanged. A non-finite gradient aborts before any mutation, naming
    /// the offending parameter.
    pub fn step(
        &mut self,
        store: &mut ParamStore<E>,
        grads: &[Option<Vec<E>>],
        lr: f64,
    ) -> Result<()> {
        debug_assert_eq!(grads.len(), store.len());
        for (id, p) in store.iter() {
            if let Some(g) = &grads[id.index()] {
                if !p.trainable {
                    continue;
                }
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(Error::invalid(
                        "adam_step",
                        alloc::format!("non-finite gradient for parameter '{}'", p.name),
                    ));
                }
            }
        }

        self.step += 1;
        let t = self.step as f64;
        let bc1 = E::from_f64(1.0 / (1.0 - libm::pow(self.beta1, t)));
        let bc2 = E::from_f64(1.0 / (1.0 - libm::pow(self.beta2, t)));
        let b1 = E::from_f64(self.beta1);
        let b2 = E::from_f64(self.beta2);
        let one_m_b1 = E::from_f64(1.0 - self.beta1);
        let one_m_b2 = E::from_f64(1.0 - self.beta2);
        let lr_e = E::from_f64(lr);
        let eps = E::from_f64(self.epsilon);

        for (id, p) in store.iter_mut() {
            let Some(g) = &grads[id.index()] else { continue };
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for i in 0..g.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_m_b1 * gi;
                v[i] = b2 * v[i] + one_m_b2 * gi * gi;
                let m_hat = m[i] * bc1;
                let v_hat = v[i] * bc2;
                p.value.data[i] -= lr_e * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_max` (step 0) to `lr_min` (step `total_steps`),
/// no restarts. Out-of-range steps clamp to the endpoints; both endpoints
/// are returned exactly.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> f64 {
    debug_assert!(total_steps > 0);
    if step == 0 {
        return lr_max;
    }
    if step >= total_steps {
        return lr_min;
    }
    let phase = core::f64::consts::PI * step as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + libm::cos(phase))
}
