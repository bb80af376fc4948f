//! Estimating a proposal's return from trajectories of the current policy.
//!
//! Two routes are available. `resimulate` replays the proposal from each
//! stored episode's initial state on the real (deterministic) dynamics, with
//! the same action stream. The importance-weighted route keeps the stored
//! transitions and corrects the batch mean return with importance-weighted
//! TD errors:
//!
//! ```text
//! G(θ') ≈ Ḡ(θ) + mean_{(s,a,r,s')} Π (r + γ V'(s') - V(s)),   Π = π'(a|s) / π(a|s)
//! ```
//!
//! where the state distribution of θ stands in for that of θ'.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::env::{Env, EnvState};
use crate::error::{Error, Result};
use crate::policy::{Policy, StateEncoder};
use crate::rollout::{rollout_from, Trajectory};

fn cell_of(state: &EnvState) -> Result<usize> {
    state
        .cell()
        .ok_or_else(|| Error::Unsupported("state tables need a tabular environment".into()))
}

/// Normalized state visitation counts over a batch of trajectories. Every
/// state of every trajectory counts, the terminal one included.
#[derive(Debug, Clone, PartialEq)]
pub struct Visitation {
    counts: BTreeMap<usize, usize>,
    total: usize,
}

impl Visitation {
    pub fn frequency(&self, state: usize) -> f64 {
        self.counts.get(&state).map_or(0.0, |c| *c as f64 / self.total as f64)
    }

    pub fn count(&self, state: usize) -> usize {
        self.counts.get(&state).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.counts.iter().map(|(s, c)| (*s, *c as f64 / self.total as f64))
    }
}

pub fn visitation_frequency(trajs: &[Trajectory]) -> Result<Visitation> {
    if trajs.is_empty() {
        return Err(Error::invalid("visitation of an empty batch"));
    }
    let mut counts = BTreeMap::new();
    let mut total = 0;
    for traj in trajs {
        for s in traj.states() {
            *counts.entry(cell_of(&s)?).or_insert(0) += 1;
            total += 1;
        }
    }
    Ok(Visitation { counts, total })
}

/// Per-state value estimates from empirical return-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: BTreeMap<usize, f64>,
    visits: BTreeMap<usize, usize>,
}

impl ValueTable {
    /// `None` for states the batch never acted from.
    pub fn get(&self, state: usize) -> Option<f64> {
        self.values.get(&state).copied()
    }

    pub fn visits(&self, state: usize) -> usize {
        self.visits.get(&state).copied().unwrap_or(0)
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.keys().copied()
    }
}

/// `V(s)` = (weighted) mean discounted return-to-go over every visit to `s`.
/// `weights[i][t]` weighs the visit at step `t` of trajectory `i`.
pub fn value_table_from_batch(trajs: &[Trajectory], gamma: f64, weights: Option<&[Vec<f64>]>) -> Result<ValueTable> {
    if let Some(w) = weights {
        if w.len() != trajs.len() {
            return Err(Error::Shape {
                expected: trajs.len(),
                got: w.len(),
            });
        }
    }
    let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut visits = BTreeMap::new();
    for (i, traj) in trajs.iter().enumerate() {
        let w = weights.map(|w| &w[i]);
        if let Some(w) = w {
            if w.len() != traj.len() {
                return Err(Error::Shape {
                    expected: traj.len(),
                    got: w.len(),
                });
            }
        }
        let mut to_go = 0.0;
        for (t, tr) in traj.transitions.iter().enumerate().rev() {
            to_go = tr.reward + gamma * to_go;
            let weight = w.map_or(1.0, |w| w[t]);
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(Error::invalid(format!("importance weight {weight} at step {t} of trajectory {i}")));
            }
            let s = cell_of(&tr.state)?;
            let entry = sums.entry(s).or_insert((0.0, 0.0));
            entry.0 += weight * to_go;
            entry.1 += weight;
            *visits.entry(s).or_insert(0) += 1;
        }
    }
    let values = sums
        .into_iter()
        .filter(|(_, (_, w))| *w > 0.0)
        .map(|(s, (num, den))| (s, num / den))
        .collect();
    Ok(ValueTable { values, visits })
}

/// `π'(a_t|s_t) / π(a_t|s_t)` along one trajectory.
pub fn importance_ratios(proposal: &Policy, current: &Policy, encoder: &StateEncoder, traj: &Trajectory) -> Result<Vec<f64>> {
    traj.transitions
        .iter()
        .map(|tr| {
            let x = encoder.encode(&tr.state)?;
            let num = proposal.action_probs(&x)?[tr.action];
            let den = current.action_probs(&x)?[tr.action];
            let ratio = num / den;
            // softmax probabilities are strictly positive unless they underflow
            if !(den > 0.0 && ratio > 0.0 && ratio.is_finite()) {
                return Err(Error::Numeric {
                    layer: 0,
                    what: format!("importance ratio {num}/{den} for action {}", tr.action),
                });
            }
            Ok(ratio)
        })
        .collect()
}

/// Suffix products of importance ratios: the weight of the return-to-go
/// from each step under the proposal.
pub fn return_to_go_weights(
    proposal: &Policy,
    current: &Policy,
    encoder: &StateEncoder,
    trajs: &[Trajectory],
) -> Result<Vec<Vec<f64>>> {
    trajs
        .iter()
        .map(|traj| {
            let ratios = importance_ratios(proposal, current, encoder, traj)?;
            let mut out = vec![0.0; ratios.len()];
            let mut acc = 1.0;
            for t in (0..ratios.len()).rev() {
                acc *= ratios[t];
                out[t] = acc;
            }
            Ok(out)
        })
        .collect()
}

/// Which values enter the TD error used as advantage estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdForm {
    /// `r + γ V_{θ'}(s') - V_{θ}(s)`.
    Mixed,
    /// `r + γ V_{θ'}(s') - V_{θ'}(s)`.
    SinglePolicy,
}

impl fmt::Display for TdForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TdForm::Mixed => "mixed",
            TdForm::SinglePolicy => "single",
        })
    }
}

impl FromStr for TdForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(TdForm::Mixed),
            "single" => Ok(TdForm::SinglePolicy),
            other => Err(Error::invalid(format!("unknown TD form '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsEstimate {
    /// Estimated return of the proposal.
    pub estimate: f64,
    /// Mean return of the batch under the current policy.
    pub baseline: f64,
    pub correction: f64,
    /// Standard error of the correction term.
    pub std_error: f64,
    /// Value lookups that fell back to zero for an unvisited state.
    pub missing_values: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn is_advantage_estimate(
    proposal: &Policy,
    current: &Policy,
    encoder: &StateEncoder,
    trajs: &[Trajectory],
    v_current: &ValueTable,
    v_proposal: &ValueTable,
    gamma: f64,
    form: TdForm,
) -> Result<IsEstimate> {
    if trajs.is_empty() {
        return Err(Error::invalid("importance estimate of an empty batch"));
    }
    let mut missing = 0;
    let mut lookup = |table: &ValueTable, s: usize| {
        table.get(s).unwrap_or_else(|| {
            missing += 1;
            0.0
        })
    };
    let mut terms = Vec::new();
    for traj in trajs {
        let ratios = importance_ratios(proposal, current, encoder, traj)?;
        for (tr, pi) in traj.transitions.iter().zip(ratios) {
            let s = cell_of(&tr.state)?;
            let next = if tr.done { 0.0 } else { lookup(v_proposal, cell_of(&tr.next_state)?) };
            let here = match form {
                TdForm::Mixed => lookup(v_current, s),
                TdForm::SinglePolicy => lookup(v_proposal, s),
            };
            terms.push(pi * (tr.reward + gamma * next - here));
        }
    }
    let baseline = trajs.iter().map(|t| t.discounted_return(gamma)).sum::<f64>() / trajs.len() as f64;
    let n = terms.len() as f64;
    let correction = terms.iter().sum::<f64>() / n;
    let var = if terms.len() > 1 {
        terms.iter().map(|t| (t - correction).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(IsEstimate {
        estimate: baseline + correction,
        baseline,
        correction,
        std_error: (var / n).sqrt(),
        missing_values: missing,
    })
}

/// Builds both value tables from the batch and returns the importance
/// estimate of the proposal's return.
pub fn bootstrap_return(
    proposal: &Policy,
    current: &Policy,
    encoder: &StateEncoder,
    trajs: &[Trajectory],
    gamma: f64,
    form: TdForm,
) -> Result<IsEstimate> {
    let v_current = value_table_from_batch(trajs, gamma, None)?;
    let weights = return_to_go_weights(proposal, current, encoder, trajs)?;
    let v_proposal = value_table_from_batch(trajs, gamma, Some(&weights))?;
    is_advantage_estimate(proposal, current, encoder, trajs, &v_current, &v_proposal, gamma, form)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterfactualMethod {
    Resimulate,
    ImportanceWeighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualTrajectory {
    pub source: usize,
    pub trajectory: Trajectory,
    pub method: CounterfactualMethod,
    /// Per-step importance ratios; only for the importance-weighted method.
    pub weights: Option<Vec<f64>>,
}

/// Replays the proposal from the source's initial state on the real
/// dynamics.
pub fn resimulate<R: Rng + ?Sized>(
    proposal: &Policy,
    source: &Trajectory,
    source_id: usize,
    env: &mut Env,
    encoder: &StateEncoder,
    actions: &mut R,
) -> Result<CounterfactualTrajectory> {
    let trajectory = rollout_from(env, proposal, encoder, source.initial, actions)?;
    Ok(CounterfactualTrajectory {
        source: source_id,
        trajectory,
        method: CounterfactualMethod::Resimulate,
        weights: None,
    })
}

/// Keeps the source transitions and attaches the proposal's importance ratios.
pub fn importance_weighted(
    proposal: &Policy,
    current: &Policy,
    source: &Trajectory,
    source_id: usize,
    encoder: &StateEncoder,
) -> Result<CounterfactualTrajectory> {
    let weights = importance_ratios(proposal, current, encoder, source)?;
    Ok(CounterfactualTrajectory {
        source: source_id,
        trajectory: source.clone(),
        method: CounterfactualMethod::ImportanceWeighted,
        weights: Some(weights),
    })
}
