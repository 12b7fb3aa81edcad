//! Adam with bias correction and the inverse-square-root warmup schedule.

use serde::{Deserialize, Serialize};

use super::param::{ParamTensor, Parameterized};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor2,
    pub v: Tensor2,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn for_param(p: &ParamTensor, cfg: AdamConfig) -> Self {
        let (r, c) = p.value.shape();
        Self {
            m: Tensor2::zeros(r, c),
            v: Tensor2::zeros(r, c),
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }
}

/// One Adam update of `param` using its accumulated gradient.
pub fn adam_step(param: &mut ParamTensor, state: &mut AdamState, lr: f64) {
    debug_assert_eq!(param.value.shape(), state.m.shape());
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let g = param.grad.data();
    let m = state.m.data_mut();
    for (mi, &gi) in m.iter_mut().zip(g) {
        *mi = b1 * *mi + (1.0 - b1) * gi;
    }
    let v = state.v.data_mut();
    for (vi, &gi) in v.iter_mut().zip(g) {
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
    }
    let (m, v) = (state.m.data(), state.v.data());
    for ((w, &mi), &vi) in param.value.data_mut().iter_mut().zip(m).zip(v) {
        let mhat = mi / c1;
        let vhat = vi / c2;
        *w -= lr * mhat / (vhat.sqrt() + state.eps);
    }
}

/// Adam over every parameter of a model, in visit order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub states: Vec<AdamState>,
}

impl Adam {
    pub fn new<M: Parameterized<f64>>(model: &M, config: AdamConfig) -> Self {
        let mut states = Vec::new();
        model.visit_params("", &mut |_, p| states.push(AdamState::for_param(p, config)));
        Self { config, states }
    }

    pub fn step<M: Parameterized<f64>>(&mut self, model: &mut M, lr: f64) {
        let mut it = self.states.iter_mut();
        model.visit_params_mut("", &mut |_, p| {
            let s = it.next().expect("optimizer built for this model");
            adam_step(p, s, lr);
        });
    }

    pub fn steps_taken(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step)
    }
}

/// `rate = d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoamSchedule {
    pub d_model: usize,
    pub warmup_steps: usize,
}

impl NoamSchedule {
    pub fn rate(&self, step: u64) -> Result<f64> {
        noam_lr(*self, step)
    }
}

pub fn noam_lr(sched: NoamSchedule, step: u64) -> Result<f64> {
    if step == 0 {
        return Err(Error::Contract("learning-rate schedule steps start at 1".into()));
    }
    if sched.warmup_steps == 0 || sched.d_model == 0 {
        return Err(Error::Config("warmup_steps and d_model must be positive".into()));
    }
    let s = step as f64;
    let w = sched.warmup_steps as f64;
    Ok((sched.d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_param() {
        let mut p = ParamTensor::new(Tensor2::from_rows(&[[1.0, -2.0]]).unwrap());
        let before = p.value.clone();
        let mut s = AdamState::for_param(&p, AdamConfig::default());
        for _ in 0..5 {
            adam_step(&mut p, &mut s, 0.1);
        }
        assert_eq!(p.value, before);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let mut p = ParamTensor::new(Tensor2::zeros(1, 2));
        let mut s = AdamState::for_param(&p, AdamConfig::default());
        let lr = 0.01;
        let mut last = 0.0;
        for _ in 0..2000 {
            p.grad = Tensor2::from_rows(&[[0.3, -4.0]]).unwrap();
            let before = p.value.clone();
            adam_step(&mut p, &mut s, lr);
            last = (p.value[(0, 0)] - before[(0, 0)]).abs();
            let d1 = p.value[(0, 1)] - before[(0, 1)];
            assert!(d1 > 0.0);
        }
        assert!((last - lr).abs() < 1e-6, "{last}");
    }

    #[test]
    fn noam_examples() {
        let sched = NoamSchedule {
            d_model: 60,
            warmup_steps: 4000,
        };
        let peak = sched.rate(4000).unwrap();
        assert!((peak - 60f64.powf(-0.5) * 4000f64.powf(-0.5)).abs() < 1e-18);
        let first = sched.rate(1).unwrap();
        assert!((first - 5.10e-7).abs() < 0.01e-7, "{first}");
        assert!(matches!(sched.rate(0), Err(Error::Contract(_))));
    }
}
