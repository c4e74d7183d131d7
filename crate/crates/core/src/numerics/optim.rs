use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::mlp::{MlpGrads, MlpParams};
use crate::error::{precondition, Error, Result};

/// Step-decay learning-rate schedule: `initial / factor^(epoch / decay_every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub initial: f32,
    pub decay_every: usize,
    pub factor: f32,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule { initial: 0.01, decay_every: 8, factor: 10.0 }
    }
}

impl StepSchedule {
    pub fn lr_at(&self, epoch: usize) -> f32 {
        let steps = epoch.checked_div(self.decay_every).unwrap_or(0);
        self.initial / libm::powf(self.factor, steps as f32)
    }
}

/// SGD with classical momentum: `v ← μ·v + g; w ← w − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    schedule: StepSchedule,
    momentum: f32,
    epoch: usize,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(schedule: StepSchedule, momentum: f32) -> Result<Self> {
        if !(schedule.initial > 0.0) {
            return Err(precondition("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(precondition("momentum must lie in [0, 1)"));
        }
        if !(schedule.factor >= 1.0) {
            return Err(precondition("decay factor must be at least 1"));
        }
        Ok(Sgd { schedule, momentum, epoch: 0, velocity: Vec::new() })
    }

    pub fn lr(&self) -> f32 {
        self.schedule.lr_at(self.epoch)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Applies one update to every network in `nets` using the matching gradients.
    ///
    /// Nothing is modified if any gradient entry is non-finite; the error names the
    /// offending layer, counting layers across `nets` in order.
    pub fn step(&mut self, nets: &mut [&mut MlpParams], grads: &[&MlpGrads]) -> Result<()> {
        if nets.len() != grads.len() {
            return Err(precondition("one gradient set per network is required"));
        }
        let mut layer = 0;
        for (net, g) in nets.iter().zip(grads) {
            if g.weights.len() != net.layers().len() || g.biases.len() != net.layers().len() {
                return Err(precondition("gradient layer count does not match the network"));
            }
            for (l, (w, b)) in net.layers().iter().zip(g.weights.iter().zip(&g.biases)) {
                if w.shape() != l.weights.shape() || b.len() != l.biases.len() {
                    return Err(Error::Dimension { op: "sgd step", expected: l.weights.shape(), found: w.shape() });
                }
                if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient { layer });
                }
                layer += 1;
            }
        }

        let lr = self.lr();
        let mu = self.momentum;
        let mut slot = 0;
        for (net, g) in nets.iter_mut().zip(grads) {
            for (l, (gw, gb)) in net.layers_mut().iter_mut().zip(g.weights.iter().zip(&g.biases)) {
                for (param, grad) in [(l.weights.as_mut_slice(), gw.as_slice()), (l.biases.as_mut_slice(), gb.as_slice())] {
                    if self.velocity.len() <= slot {
                        self.velocity.push(alloc::vec![0.0; param.len()]);
                    }
                    let v = &mut self.velocity[slot];
                    for ((p, &gv), vel) in param.iter_mut().zip(grad).zip(v.iter_mut()) {
                        *vel = mu * *vel + gv;
                        *p -= lr * *vel;
                    }
                    slot += 1;
                }
            }
        }
        Ok(())
    }
}
