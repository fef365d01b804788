//! Learner abstraction and its two implementations.

pub mod net;
mod synthetic;

pub use net::{Adam, MaskedPredictionNet, NetConfig};
pub use synthetic::SyntheticLearner;

use crate::error::{Error, Result};
use crate::masking::MaskMatrix;
use crate::traj::Window;

/// Normalized windows with one mask each, all drawn from scheme `arm`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub arm: usize,
    pub windows: &'a [Window],
    pub masks: &'a [MaskMatrix],
}

pub trait Learner: Sync {
    type Snapshot: Clone;

    /// One optimization step; returns the loss before the step.
    fn train_step(&mut self, batch: &Batch<'_>) -> Result<f64>;

    /// Loss on a batch without touching any state.
    fn eval_loss(&self, batch: &Batch<'_>) -> Result<f64>;

    fn snapshot(&self) -> Self::Snapshot;

    fn restore(&mut self, snapshot: Self::Snapshot) -> Result<()>;
}

/// The masked prediction network together with its optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetLearner {
    pub net: MaskedPredictionNet,
    pub optimizer: Adam,
}

impl NetLearner {
    pub fn new(net: MaskedPredictionNet, lr: f64) -> Self {
        let optimizer = Adam::new(lr, net.param_count());
        NetLearner { net, optimizer }
    }
}

impl Learner for NetLearner {
    type Snapshot = (MaskedPredictionNet, Adam);

    fn train_step(&mut self, batch: &Batch<'_>) -> Result<f64> {
        let (loss, grad) = self.net.loss_and_grad(batch.windows, batch.masks)?;
        let step = self.optimizer.steps() as usize;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: format!("loss {loss} on arm {}", batch.arm),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                step,
                detail: format!("gradient of parameter {i} is {} on arm {}", grad[i], batch.arm),
            });
        }
        self.optimizer.step(self.net.params_mut(), &grad)?;
        Ok(loss)
    }

    fn eval_loss(&self, batch: &Batch<'_>) -> Result<f64> {
        self.net.loss(batch.windows, batch.masks)
    }

    fn snapshot(&self) -> Self::Snapshot {
        (self.net.clone(), self.optimizer.clone())
    }

    fn restore(&mut self, (net, optimizer): Self::Snapshot) -> Result<()> {
        if net.config() != self.net.config() {
            return Err(Error::Dimension("snapshot architecture differs".into()));
        }
        self.net = net;
        self.optimizer = optimizer;
        Ok(())
    }
}
