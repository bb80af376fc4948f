//! Next-state predictor whose prediction error is the intrinsic reward.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{mse_loss, DenseNet, OutputActivation};
use crate::policy::StateEncoder;
use crate::rollout::Trajectory;

/// How per-step prediction errors combine into one trajectory loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossReduction {
    Mean,
    Sum,
}

impl fmt::Display for LossReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossReduction::Mean => "mean",
            LossReduction::Sum => "sum",
        })
    }
}

impl FromStr for LossReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(LossReduction::Mean),
            "sum" => Ok(LossReduction::Sum),
            other => Err(Error::invalid(format!("unknown loss reduction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuriosityConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub updates_per_trajectory: usize,
    pub reduction: LossReduction,
    /// Multiplier applied to the loss where it enters the mixed reward.
    pub scale: f64,
}

impl Default for CuriosityConfig {
    fn default() -> Self {
        Self {
            hidden: 150,
            learning_rate: 1e-3,
            updates_per_trajectory: 1,
            reduction: LossReduction::Mean,
            scale: 1.0,
        }
    }
}

impl CuriosityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.updates_per_trajectory == 0 {
            return Err(Error::invalid("curiosity hidden size and updates per trajectory must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "curiosity learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!("curiosity scale must be non-negative, got {}", self.scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CuriosityNet {
    net: DenseNet,
    encoder: StateEncoder,
    config: CuriosityConfig,
}

impl CuriosityNet {
    pub fn new<R: Rng + ?Sized>(encoder: StateEncoder, config: CuriosityConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let dim = encoder.dim();
        let net = DenseNet::random(&[dim, config.hidden, dim], OutputActivation::Identity, rng)?;
        Ok(Self { net, encoder, config })
    }

    pub fn from_net(net: DenseNet, encoder: StateEncoder, config: CuriosityConfig) -> Result<Self> {
        config.validate()?;
        if net.input_dim() != encoder.dim() || net.output_dim() != encoder.dim() {
            return Err(Error::Shape {
                expected: encoder.dim(),
                got: net.input_dim(),
            });
        }
        Ok(Self { net, encoder, config })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn config(&self) -> &CuriosityConfig {
        &self.config
    }

    fn encoded_pairs(&self, traj: &Trajectory) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if traj.is_empty() {
            return Err(Error::invalid("curiosity loss needs a trajectory with at least two states"));
        }
        traj.transitions
            .iter()
            .map(|t| Ok((self.encoder.encode(&t.state)?, self.encoder.encode(&t.next_state)?)))
            .collect()
    }

    /// Prediction error of the next state over the trajectory. This is the
    /// intrinsic reward.
    pub fn trajectory_loss(&self, traj: &Trajectory) -> Result<f64> {
        let pairs = self.encoded_pairs(traj)?;
        let mut total = 0.0;
        for (x, y) in &pairs {
            total += mse_loss(&self.net.forward(x)?, y)?;
        }
        Ok(match self.config.reduction {
            LossReduction::Mean => total / pairs.len() as f64,
            LossReduction::Sum => total,
        })
    }

    /// Trains on the trajectory's transitions and returns the loss measured
    /// before training.
    pub fn train_on_trajectory(&mut self, traj: &Trajectory) -> Result<f64> {
        let before = self.trajectory_loss(traj)?;
        if self.config.learning_rate == 0.0 {
            return Ok(before);
        }
        let pairs = self.encoded_pairs(traj)?;
        for _ in 0..self.config.updates_per_trajectory {
            for (t, (x, y)) in pairs.iter().enumerate() {
                self.net.sgd_step(x, y, self.config.learning_rate).map_err(|e| match e {
                    Error::Numeric { layer, what } => Error::Numeric {
                        layer,
                        what: format!("curiosity training at step {t}: {what}"),
                    },
                    other => other,
                })?;
            }
        }
        Ok(before)
    }

    /// Pure form of [`CuriosityNet::train_on_trajectory`].
    pub fn trained_on(&self, traj: &Trajectory) -> Result<(CuriosityNet, f64)> {
        let mut next = self.clone();
        let loss = next.train_on_trajectory(traj)?;
        Ok((next, loss))
    }
}
