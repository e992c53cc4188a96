use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::params::{Gradients, Parameters};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_HALVE_EVERY: u64 = 2400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        epsilon: f64,
    },
}

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr, momentum: DEFAULT_MOMENTUM }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn base_lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr, .. } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Sgd { lr, momentum } => lr > 0.0 && (0.0..1.0).contains(&momentum),
            OptimizerKind::Adam { lr, beta1, beta2, epsilon } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Step-decayed learning rate: halved after every `halve_every` updates.
pub fn lr_at(base: f64, step: u64, halve_every: u64) -> f64 {
    if halve_every == 0 {
        return base;
    }
    base * 0.5f64.powi((step / halve_every).min(i32::MAX as u64) as i32)
}

/// Optimizer state for one parameter set.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    halve_every: u64,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &Parameters, halve_every: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Optimizer {
            kind,
            halve_every,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        lr_at(self.kind.base_lr(), self.step, self.halve_every)
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Gradients) -> Result<()> {
        grads.check_matches(params)?;
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let moments = self.first.layers.iter_mut().flatten().zip(self.second.layers.iter_mut().flatten());
        for ((p, g), (m, v)) in params.trainable_mut().zip(grads.iter()).zip(moments) {
            match self.kind {
                OptimizerKind::Sgd { momentum, .. } => {
                    for ((p, &g), m) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()) {
                        *m = momentum * *m + g;
                        *p -= lr * *m;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon, .. } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (((p, &g), m), v) in
                        p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
