use seastate_autodiff::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::nets::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, learning_rate: 5e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // zero is accepted so a run can be frozen for diagnostics
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return arg(format!("learning rate must be nonnegative, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return arg("Adam moments must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// SGD or bias-corrected Adam over a model's parameter list.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    cfg: OptimizerConfig,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, step: 0, m: vec![], v: vec![] })
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update; `grads[i]` belongs to `params[i]`.
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.value.len() != g.len()) {
            return arg("gradients do not match the parameter list");
        }
        let lr = self.cfg.learning_rate;
        self.step += 1;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                let lr = T::of(lr);
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, &gv) in p.value.iter_mut().zip(g) {
                        *w = *w - lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
                    self.v = self.m.clone();
                }
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                let c1 = 1.0 - b1.powi(self.step);
                let c2 = 1.0 - b2.powi(self.step);
                let (tb1, tb2) = (T::of(b1), T::of(b2));
                let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
                // lr·m̂/(√v̂+ε) written with the corrections folded into the step size
                let step = T::of(lr / c1);
                let sc2 = T::of(1.0 / c2.sqrt());
                let eps = T::of(self.cfg.epsilon);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
                    for (((w, &gv), mv), vv) in p.value.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mv = tb1 * *mv + ob1 * gv;
                        *vv = tb2 * *vv + ob2 * gv * gv;
                        *w = *w - step * *mv / (vv.sqrt() * sc2 + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<Param<f64>> {
        vec![Param { name: "w".into(), shape: vec![1], value: vec![v] }]
    }

    #[test]
    fn sgd_step() {
        let mut p = one(1.0);
        let mut o = Optimizer::new(OptimizerConfig { kind: OptimizerKind::Sgd, learning_rate: 0.005, ..Default::default() }).unwrap();
        o.step(&mut p, &[vec![1.0]]).unwrap();
        assert!((p[0].value[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        for g in [3.0, -0.02] {
            let mut p = one(0.0);
            let mut o = Optimizer::new(OptimizerConfig::default()).unwrap();
            o.step(&mut p, &[vec![g]]).unwrap();
            assert!((p[0].value[0] + 5e-4 * f64::signum(g)).abs() < 1e-9, "{}", p[0].value[0]);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut p = one(0.7);
            let mut o = Optimizer::new(OptimizerConfig { kind, ..Default::default() }).unwrap();
            for _ in 0..3 {
                o.step(&mut p, &[vec![0.0]]).unwrap();
            }
            assert_eq!(p[0].value[0], 0.7);
        }
    }

    #[test]
    fn adam_matches_textbook_update() {
        let grads = [0.5, -1.0, 0.25, 2.0];
        let mut p = one(1.0);
        let mut o = Optimizer::new(OptimizerConfig { learning_rate: 0.01, ..Default::default() }).unwrap();
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
        for (t, &g) in grads.iter().enumerate() {
            o.step(&mut p, &[vec![g]]).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0].value[0] - w).abs() < 1e-12);
    }
}
