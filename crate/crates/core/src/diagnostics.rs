//! Post-processing of finished chains: traces, retained parameters, cosine
//! similarity between them, fresh-episode evaluation and visitation maps.
//!
//! Burn-in is always applied here, never inside the sampler.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::env::{EnvConfig, EnvState, StateKind};
use crate::error::{Error, Result};
use crate::policy::{ParamVector, Policy, PolicySpec, StateEncoder};
use crate::rng::{tag, EpisodeStreams};
use crate::rollout::{rollout, Trajectory};
use crate::sampler::ChainRecord;

/// Fraction of the chain discarded as burn-in unless told otherwise.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;

pub fn default_burn_in(iterations: usize) -> usize {
    (iterations as f64 * DEFAULT_BURN_IN_FRACTION).floor() as usize
}

pub fn cosine_similarity(u: &ParamVector, v: &ParamVector) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector is undefined"));
    }
    let dot: f64 = u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// A distinct chain state together with the iterations it occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedState {
    pub theta: ParamVector,
    /// Iteration at which the chain first held this state (after burn-in).
    pub first_k: usize,
    pub stay: usize,
    /// Average of the mean returns recorded while the chain stayed here.
    pub mean_return: f64,
}

/// Collapses consecutive repeats of the chain after `burn_in` records. A
/// rejection repeats the previous state, so each run of identical states
/// becomes one entry.
pub fn retained_states(chain: &[ChainRecord], burn_in: usize) -> Vec<RetainedState> {
    let mut out: Vec<RetainedState> = Vec::new();
    for rec in chain.iter().skip(burn_in) {
        match out.last_mut() {
            Some(last) if last.theta.same_bits(&rec.theta) => {
                last.mean_return += (rec.mean_return - last.mean_return) / (last.stay + 1) as f64;
                last.stay += 1;
            }
            _ => out.push(RetainedState {
                theta: rec.theta.clone(),
                first_k: rec.k,
                stay: 1,
                mean_return: rec.mean_return,
            }),
        }
    }
    out
}

/// Chain states after burn-in, deduplicated when `unique_only` is set.
pub fn retained_thetas(chain: &[ChainRecord], burn_in: usize, unique_only: bool) -> Vec<ParamVector> {
    if unique_only {
        retained_states(chain, burn_in).into_iter().map(|s| s.theta).collect()
    } else {
        chain.iter().skip(burn_in).map(|r| r.theta.clone()).collect()
    }
}

/// Retained states ordered by recorded mean return, best first.
pub fn best_retained(chain: &[ChainRecord], burn_in: usize, count: usize) -> Vec<RetainedState> {
    let mut states = retained_states(chain, burn_in);
    states.sort_by(|a, b| b.mean_return.total_cmp(&a.mean_return).then(a.first_k.cmp(&b.first_k)));
    states.truncate(count);
    states
}

/// Symmetric matrix of pairwise cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn from_thetas(thetas: &[ParamVector]) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::invalid("similarity matrix over an empty selection"));
        }
        let n = thetas.len();
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            values[i][i] = 1.0;
            for j in 0..i {
                let c = cosine_similarity(&thetas[i], &thetas[j])?;
                values[i][j] = c;
                values[j][i] = c;
            }
        }
        Ok(Self { values })
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Mean over i != j; `None` for a 1x1 matrix.
    pub fn mean_off_diagonal(&self) -> Option<f64> {
        let n = self.size();
        if n < 2 {
            return None;
        }
        let total: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| self.values[i][j]).sum();
        Some(total / (n * (n - 1)) as f64)
    }
}

pub fn similarity_matrix(chain: &[ChainRecord], burn_in: usize, unique_only: bool) -> Result<SimilarityMatrix> {
    SimilarityMatrix::from_thetas(&retained_thetas(chain, burn_in, unique_only))
}

/// Evenly spaced subsample of at most `count` items, keeping the first.
pub fn thin<T: Clone>(items: &[T], count: usize) -> Vec<T> {
    if items.len() <= count || count == 0 {
        return items.to_vec();
    }
    (0..count).map(|i| items[i * items.len() / count].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub acceptance_rate: f64,
    pub retained_count_trace: Vec<usize>,
    pub mean_return_trace: Vec<f64>,
    pub intrinsic_loss_trace: Vec<f64>,
}

impl ChainSummary {
    pub fn best_mean_return(&self) -> f64 {
        self.mean_return_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn chain_summary(chain: &[ChainRecord]) -> Result<ChainSummary> {
    if chain.is_empty() {
        return Err(Error::invalid("summary of an empty chain"));
    }
    let retained_count_trace: Vec<usize> = chain
        .iter()
        .scan(0, |count, r| {
            *count += r.accepted as usize;
            Some(*count)
        })
        .collect();
    Ok(ChainSummary {
        acceptance_rate: *retained_count_trace.last().unwrap() as f64 / chain.len() as f64,
        retained_count_trace,
        mean_return_trace: chain.iter().map(|r| r.mean_return).collect(),
        intrinsic_loss_trace: chain.iter().map(|r| r.intrinsic_loss).collect(),
    })
}

/// Rolls out every policy for `episodes_per_policy` fresh episodes. Policy
/// `p`, episode `i` uses stream `[EVAL, p, i]`; results are in policy order.
pub fn policy_episodes(
    policies: &[ParamVector],
    env: &EnvConfig,
    hidden: usize,
    episodes_per_policy: usize,
    seed: u64,
) -> Result<Vec<Vec<Trajectory>>> {
    let proto = env.build()?;
    let env_spec = proto.spec();
    let spec = PolicySpec::for_env(&env_spec, hidden);
    let encoder = StateEncoder::for_env(&env_spec);
    policies
        .par_iter()
        .enumerate()
        .map(|(p, theta)| {
            let policy = Policy::new(&spec, theta)?;
            (0..episodes_per_policy)
                .map(|i| {
                    let mut env = proto.clone();
                    let mut streams = EpisodeStreams::new(seed, &[tag::EVAL, p as u64, i as u64]);
                    rollout(&mut env, &policy, &encoder, &mut streams)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub returns: Vec<f64>,
    pub mean_return: f64,
    /// Share of episodes ending on the goal cell; grids only.
    pub goal_rate: Option<f64>,
}

fn goal_cell(env: &EnvConfig) -> Result<Option<usize>> {
    Ok(env.build()?.grid_layout().map(|l| l.goal))
}

fn reaches(traj: &Trajectory, goal: usize) -> bool {
    traj.final_state() == EnvState::Cell(goal)
}

/// Fresh-episode evaluation of each policy.
pub fn evaluate_policies(
    policies: &[ParamVector],
    env: &EnvConfig,
    hidden: usize,
    gamma: f64,
    episodes: usize,
    seed: u64,
) -> Result<Vec<PolicyEvaluation>> {
    if episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let goal = goal_cell(env)?;
    Ok(policy_episodes(policies, env, hidden, episodes, seed)?
        .into_iter()
        .map(|trajs| {
            let returns: Vec<f64> = trajs.iter().map(|t| t.discounted_return(gamma)).collect();
            PolicyEvaluation {
                mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
                goal_rate: goal.map(|g| trajs.iter().filter(|t| reaches(t, g)).count() as f64 / trajs.len() as f64),
                returns,
            }
        })
        .collect())
}

/// Per-cell visit frequencies laid out like the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationGrid {
    pub env: &'static str,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, summing to one.
    pub frequencies: Vec<f64>,
}

impl VisitationGrid {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.frequencies[row * self.cols + col]
    }

    pub fn cell(&self, cell: usize) -> f64 {
        self.frequencies[cell]
    }
}

pub fn visitation_grid(trajs: &[Trajectory], env: &EnvConfig) -> Result<VisitationGrid> {
    let spec = env.build()?.spec();
    let StateKind::Tabular { n_states, rows, cols } = spec.state_kind else {
        return Err(Error::Unsupported(format!("visitation maps need a grid; {} is continuous", spec.name)));
    };
    if trajs.is_empty() {
        return Err(Error::invalid("visitation of an empty batch"));
    }
    let mut counts = vec![0usize; n_states];
    for traj in trajs {
        for s in traj.states() {
            counts[s.cell().ok_or_else(|| Error::Encoding(format!("{s:?} is not a grid cell")))?] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    Ok(VisitationGrid {
        env: spec.name,
        rows,
        cols,
        frequencies: counts.iter().map(|c| *c as f64 / total as f64).collect(),
    })
}

/// Visitation aggregated over many policies.
pub fn aggregate_visitation(
    policies: &[ParamVector],
    env: &EnvConfig,
    hidden: usize,
    episodes_per_policy: usize,
    seed: u64,
) -> Result<VisitationGrid> {
    if !env.kind.is_tabular() {
        return Err(Error::Unsupported(format!("visitation maps need a grid; {} is continuous", env.kind)));
    }
    if policies.is_empty() || episodes_per_policy == 0 {
        return Err(Error::invalid("visitation needs at least one policy and one episode"));
    }
    let trajs: Vec<Trajectory> = policy_episodes(policies, env, hidden, episodes_per_policy, seed)?.into_iter().flatten().collect();
    visitation_grid(&trajs, env)
}

/// How many different routes to the goal a batch of episodes takes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDiversity {
    /// Most frequent goal-reaching cell sequence.
    pub modal_path: Vec<usize>,
    pub goal_episodes: usize,
    pub distinct_goal_paths: usize,
    /// Goal-reaching paths, other than the modal one, that pass through a
    /// cell off the modal path whose visit frequency exceeds the threshold.
    pub alternative_paths: usize,
}

pub fn path_diversity(trajs: &[Trajectory], grid: &VisitationGrid, goal: usize, threshold: f64) -> PathDiversity {
    let mut paths: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for traj in trajs.iter().filter(|t| reaches(t, goal)) {
        let cells: Vec<usize> = traj.states().filter_map(|s| s.cell()).collect();
        *paths.entry(cells).or_insert(0) += 1;
    }
    let goal_episodes = paths.values().sum();
    let Some((modal_path, _)) = paths.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
        return PathDiversity {
            modal_path: Vec::new(),
            goal_episodes: 0,
            distinct_goal_paths: 0,
            alternative_paths: 0,
        };
    };
    let modal_path = modal_path.clone();
    let alternative_paths = paths
        .keys()
        .filter(|p| **p != modal_path)
        .filter(|p| p.iter().any(|c| !modal_path.contains(c) && grid.cell(*c) > threshold))
        .count();
    PathDiversity {
        distinct_goal_paths: paths.len(),
        modal_path,
        goal_episodes,
        alternative_paths,
    }
}
