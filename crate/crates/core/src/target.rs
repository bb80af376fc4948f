//! Pieces of the unnormalized target over policy parameters: returns,
//! utilities, the prior and the curiosity-mixed reward. Everything stays in
//! log space; `exp(200)` already overflows at unit temperature.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::policy::ParamVector;
use crate::rollout::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// Flat prior; contributes nothing to the acceptance ratio.
    Uniform,
    /// `exp(-sigma^2)` with sigma^2 measuring how far parameters stray outside [-1, 1].
    BoundaryPenalty,
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorKind::Uniform => "uniform",
            PriorKind::BoundaryPenalty => "boundary",
        })
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PriorKind::Uniform),
            "boundary" | "boundary_penalty" => Ok(PriorKind::BoundaryPenalty),
            other => Err(Error::invalid(format!("unknown prior '{other}' (expected uniform or boundary)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityConfig {
    pub temperature: f64,
    /// Weight of the extrinsic return in the mixed reward; 1 disables curiosity.
    pub mu: f64,
    pub prior: PriorKind,
}

impl UtilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must lie in [0, 1], got {}", self.mu)));
        }
        Ok(())
    }
}

/// Natural log of an empirical (mean) utility.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogUtility(pub f64);

impl LogUtility {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A monotone utility of a trajectory score, given by its logarithm.
pub trait Utility {
    fn log_utility(&self, score: f64) -> f64;
}

/// `U(v) = exp(v / T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpUtility {
    pub temperature: f64,
}

impl Utility for ExpUtility {
    fn log_utility(&self, score: f64) -> f64 {
        score / self.temperature
    }
}

/// `sum_t gamma^t r_t`.
pub fn empirical_return(traj: &Trajectory, gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in traj.rewards() {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// `log((1/N) sum_i U(v_i))` via the max-shift identity.
pub fn log_mean_utility<U: Utility + ?Sized>(scores: &[f64], utility: &U) -> Result<LogUtility> {
    if scores.is_empty() {
        return Err(Error::invalid("empirical utility of zero episodes"));
    }
    if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {v}")));
    }
    let logs: Vec<f64> = scores.iter().map(|v| utility.log_utility(*v)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    Ok(LogUtility(max + (sum / scores.len() as f64).ln()))
}

pub fn log_mean_exp_utility(scores: &[f64], temperature: f64) -> Result<LogUtility> {
    log_mean_utility(scores, &ExpUtility { temperature })
}

/// `(1/D) sum_j 1[|theta_j| > 1] (theta_j^2 - 1)^2`.
pub fn boundary_variance(theta: &ParamVector) -> f64 {
    let d = theta.len().max(1) as f64;
    theta
        .as_slice()
        .iter()
        .filter(|v| v.abs() > 1.0)
        .map(|v| (v * v - 1.0).powi(2))
        .sum::<f64>()
        / d
}

pub fn prior_log_density(theta: &ParamVector, kind: PriorKind) -> f64 {
    match kind {
        PriorKind::Uniform => 0.0,
        PriorKind::BoundaryPenalty => -boundary_variance(theta),
    }
}

/// `mu * G + (1 - mu) * L`.
pub fn mixed_reward(extrinsic: f64, intrinsic: f64, mu: f64) -> f64 {
    mu * extrinsic + (1.0 - mu) * intrinsic
}
