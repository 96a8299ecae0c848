use serde::{Deserialize, Serialize};

use super::network::Trainable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(alpha: f64) -> Self {
        Self {
            alpha,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(1e-3)
    }
}

/// One bias-corrected Adam update of `params` in place. `step` is 1-based.
pub fn adam_step<F: Scalar>(
    params: &mut [F],
    grads: &[F],
    m: &mut [F],
    v: &mut [F],
    step: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Shape("adam tensors differ in length".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let (b1, b2) = (F::lit(cfg.beta1), F::lit(cfg.beta2));
    let c1 = F::one() - F::lit(cfg.beta1.powf(step as f64));
    let c2 = F::one() - F::lit(cfg.beta2.powf(step as f64));
    let (alpha, eps) = (F::lit(cfg.alpha), F::lit(cfg.epsilon));
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (F::one() - b1) * g;
        v[i] = b2 * v[i] + (F::one() - b2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        params[i] -= alpha * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// Adam moments for every tensor of one model, in visit order.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Applies accumulated gradients to `model`. Nothing is updated if any
    /// gradient is non-finite.
    pub fn step(&mut self, model: &mut dyn Trainable<F>) -> Result<()> {
        let mut finite = true;
        let mut shapes = Vec::new();
        model.visit_params(&mut |p, g| {
            finite &= g.iter().all(|x| x.is_finite());
            shapes.push(p.len());
        });
        if !finite {
            return Err(Error::NonFiniteGradient);
        }
        if self.moments.is_empty() {
            self.moments = shapes
                .iter()
                .map(|&n| (vec![F::zero(); n], vec![F::zero(); n]))
                .collect();
        } else if self.moments.len() != shapes.len()
            || self.moments.iter().zip(&shapes).any(|(m, &n)| m.0.len() != n)
        {
            return Err(Error::Shape("optimizer state does not match the model".into()));
        }
        self.step += 1;
        let step = self.step;
        let cfg = self.config;
        let mut slots = self.moments.iter_mut();
        let mut result = Ok(());
        model.visit_params(&mut |p, g| {
            let (m, v) = slots.next().expect("shape checked");
            if result.is_ok() {
                result = adam_step(p, g, m, v, step, &cfg);
            }
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_alpha() {
        let cfg = AdamConfig::with_lr(0.001);
        let (mut p, mut m, mut v) = ([0.0f64], [0.0], [0.0]);
        adam_step(&mut p, &[0.5], &mut m, &mut v, 1, &cfg).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([1.5f64], [0.0], [0.0]);
        adam_step(&mut p, &[0.0], &mut m, &mut v, 1, &cfg).unwrap();
        assert_eq!(p[0], 1.5);
    }

    #[test]
    fn equal_gradients_equal_updates() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([0.3f64, 0.3], [0.0, 0.0], [0.0, 0.0]);
        for t in 1..=5 {
            adam_step(&mut p, &[0.2, 0.2], &mut m, &mut v, t, &cfg).unwrap();
        }
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn rejects_non_finite() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([0.0f64], [0.0], [0.0]);
        assert!(matches!(
            adam_step(&mut p, &[f64::NAN], &mut m, &mut v, 1, &cfg),
            Err(Error::NonFiniteGradient)
        ));
        assert_eq!(p[0], 0.0);
    }
}
