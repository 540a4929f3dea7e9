//! Gradient clipping and the two optimizers (SGD, Adam).

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::mathx;
use crate::tape::ParamStore;
use crate::tensor::Tensor;
use crate::Result;

/// If the global L2 norm of all gradients exceeds `clip_norm`, scale every
/// gradient by `clip_norm / norm`. Returns the factor applied (1.0 when
/// the norm is already within bounds).
pub fn clip_gradients(store: &mut ParamStore, clip_norm: f64) -> f64 {
    let mut sq = 0.0;
    for p in store.params() {
        for g in p.grad.values() {
            sq += g * g;
        }
    }
    let norm = mathx::sqrt(sq);
    if norm <= clip_norm || norm == 0.0 {
        return 1.0;
    }
    let factor = clip_norm / norm;
    for p in store.params_mut() {
        for g in p.grad.values_mut() {
            *g *= factor;
        }
    }
    factor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn parse(name: &str) -> Result<OptimizerKind> {
        match name {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(alloc::format!("unknown optimizer `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    /// Adam first/second moment estimates, one pair per parameter.
    moments: Vec<(Tensor, Tensor)>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, store: &ParamStore) -> Optimizer {
        let moments = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => store
                .params()
                .iter()
                .map(|p| {
                    let (r, c) = p.value.shape();
                    (Tensor::zeros(r, c), Tensor::zeros(r, c))
                })
                .collect(),
        };
        Optimizer { kind, moments, steps: 0 }
    }

    /// One update with the given learning rate, consuming current grads.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for p in store.params_mut() {
                    for (v, g) in p.value.values_mut().iter_mut().zip(p.grad.values()) {
                        *v -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.steps += 1;
                let t = self.steps as f64;
                let bc1 = 1.0 - libm::pow(ADAM_BETA1, t);
                let bc2 = 1.0 - libm::pow(ADAM_BETA2, t);
                for (p, (m, v)) in store.params_mut().iter_mut().zip(self.moments.iter_mut()) {
                    let mv = m.values_mut();
                    let vv = v.values_mut();
                    let pv = p.value.values_mut();
                    let gv = p.grad.values();
                    for i in 0..pv.len() {
                        let g = gv[i];
                        mv[i] = ADAM_BETA1 * mv[i] + (1.0 - ADAM_BETA1) * g;
                        vv[i] = ADAM_BETA2 * vv[i] + (1.0 - ADAM_BETA2) * g * g;
                        let m_hat = mv[i] / bc1;
                        let v_hat = vv[i] / bc2;
                        pv[i] -= lr * m_hat / (mathx::sqrt(v_hat) + ADAM_EPS);
                    }
                }
            }
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// State tensors for checkpointing: (suffix, tensor) per parameter.
    pub fn state(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, (m, v)) in self.moments.iter().enumerate() {
            out.push((alloc::format!("adam.m.{i}"), m));
            out.push((alloc::format!("adam.v.{i}"), v));
        }
        out
    }

    /// Restore checkpointed state. `moments` must match the parameter
    /// count and shapes; `steps` is the recorded update count.
    pub fn restore(&mut self, moments: Vec<(Tensor, Tensor)>, steps: u64) -> Result<()> {
        if self.kind == OptimizerKind::Adam {
            if moments.len() != self.moments.len() {
                return Err(Error::Data(String::from("optimizer state length mismatch")));
            }
            for ((m, v), (sm, sv)) in moments.iter().zip(self.moments.iter()) {
                if m.shape() != sm.shape() || v.shape() != sv.shape() {
                    return Err(Error::Data(String::from("optimizer state shape mismatch")));
                }
            }
            self.moments = moments;
        }
        self.steps = steps;
        Ok(())
    }
}
