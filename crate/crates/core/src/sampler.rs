//! Metropolis chains over policy parameters.
//!
//! The driver ([`Metropolis`]) is generic over a [`PairEvaluator`], which
//! returns noisy log-utilities for the current point and the proposal. Two
//! evaluators cover the rollout-based samplers: [`RolloutEvaluator`] for the
//! plain Monte Carlo-within-Metropolis chain and [`CameoEvaluator`] for the
//! curiosity-augmented one.
//!
//! Randomness is split per iteration into independent streams (proposal,
//! every episode, accept draw), so rollouts may run in parallel and the
//! chain still reproduces bit-for-bit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bootstrap::{bootstrap_return, resimulate, TdForm};
use crate::curiosity::{CuriosityConfig, CuriosityNet};
use crate::env::{Env, EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::policy::{ParamVector, Policy, PolicySpec, StateEncoder};
use crate::rng::{stream, tag, EpisodeStreams};
use crate::rollout::{rollout, Trajectory};
use crate::target::{log_mean_exp_utility, mixed_reward, prior_log_density, PriorKind, UtilityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Cameo,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Plain => "plain",
            Mode::Cameo => "cameo",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Mode::Plain),
            "cameo" => Ok(Mode::Cameo),
            other => Err(Error::invalid(format!("unknown mode '{other}' (expected plain or cameo)"))),
        }
    }
}

/// How the proposal's episodes are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    /// N fresh rollouts of the proposal.
    Off,
    /// Replay the proposal from each stored episode's initial state.
    Resimulate,
    /// Importance-weighted TD correction of the stored batch's return.
    Importance,
}

impl fmt::Display for Bootstrap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bootstrap::Off => "off",
            Bootstrap::Resimulate => "resimulate",
            Bootstrap::Importance => "importance",
        })
    }
}

impl FromStr for Bootstrap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Bootstrap::Off),
            "resimulate" => Ok(Bootstrap::Resimulate),
            "importance" => Ok(Bootstrap::Importance),
            other => Err(Error::invalid(format!(
                "unknown bootstrap '{other}' (expected resimulate, importance or off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub episodes: usize,
    pub sigma_p: f64,
    pub mode: Mode,
    pub bootstrap: Bootstrap,
    pub seed: u64,
    pub utility: UtilityConfig,
    pub gamma: f64,
    pub hidden: usize,
    pub env: EnvConfig,
    pub curiosity: CuriosityConfig,
    /// Re-run the current point's episodes every iteration (otherwise the
    /// last estimate is reused while the chain stays put). Plain mode only.
    pub reevaluate_current: bool,
    pub td_form: TdForm,
}

/// Temperature that keeps |G|/T in a range where acceptance ratios are
/// informative for each benchmark.
pub fn default_temperature(kind: EnvKind) -> f64 {
    match kind {
        EnvKind::Gridworld | EnvKind::Cliff => 1.0,
        EnvKind::CartPole => 4.0,
        EnvKind::Acrobot => 10.0,
    }
}

pub const DEFAULT_CAMEO_MU: f64 = 0.5;

impl SamplerConfig {
    pub fn new(kind: EnvKind, mode: Mode) -> Self {
        let (bootstrap, prior, mu) = match mode {
            Mode::Plain => (Bootstrap::Off, PriorKind::Uniform, 1.0),
            Mode::Cameo => (Bootstrap::Resimulate, PriorKind::BoundaryPenalty, DEFAULT_CAMEO_MU),
        };
        Self {
            iterations: 1000,
            episodes: 20,
            sigma_p: 0.1,
            mode,
            bootstrap,
            seed: 0,
            utility: UtilityConfig {
                temperature: default_temperature(kind),
                mu,
                prior,
            },
            gamma: 1.0,
            hidden: PolicySpec::DEFAULT_HIDDEN,
            env: EnvConfig::new(kind),
            curiosity: CuriosityConfig::default(),
            reevaluate_current: true,
            td_form: TdForm::Mixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.episodes == 0 {
            return Err(Error::invalid("iterations and episodes must be at least 1"));
        }
        if !(self.sigma_p > 0.0 && self.sigma_p.is_finite()) {
            return Err(Error::invalid(format!("sigma_p must be positive, got {}", self.sigma_p)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.hidden == 0 {
            return Err(Error::invalid("policy hidden layer must be non-empty"));
        }
        if self.bootstrap == Bootstrap::Importance && !self.env.kind.is_tabular() {
            return Err(Error::Unsupported(format!(
                "importance bootstrap needs tabular value tables; {} is continuous",
                self.env.kind
            )));
        }
        self.utility.validate()?;
        self.curiosity.validate()
    }

    pub fn policy_spec(&self) -> Result<PolicySpec> {
        Ok(PolicySpec::for_env(&self.env.build()?.spec(), self.hidden))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub k: usize,
    pub theta: ParamVector,
    pub accepted: bool,
    pub log_utility_current: f64,
    pub log_utility_proposal: f64,
    /// Mean return of the chain state after this iteration's decision.
    pub mean_return: f64,
    /// Mean curiosity loss of the proposal's episodes; zero without curiosity.
    pub intrinsic_loss: f64,
}

/// Gaussian random-walk proposal.
pub fn propose<R: Rng + ?Sized>(theta: &ParamVector, sigma_p: f64, rng: &mut R) -> ParamVector {
    let values = theta
        .as_slice()
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v + sigma_p * z
        })
        .collect();
    ParamVector::new(values).expect("finite proposal from finite state")
}

/// Accepts with probability `min(1, exp(log_num - log_den))`.
pub fn mh_accept<R: Rng + ?Sized>(log_num: f64, log_den: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u.ln() < (log_num - log_den).min(0.0)
}

/// `theta_0 ~ N(0, sigma^2 I)`.
pub fn initial_theta(dim: usize, sigma: f64, seed: u64) -> ParamVector {
    let mut rng = stream(seed, &[tag::INIT]);
    propose(&ParamVector::zeros(dim), sigma, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideEvaluation {
    /// Log empirical utility, without the prior.
    pub log_utility: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvaluation {
    pub current: SideEvaluation,
    pub proposal: SideEvaluation,
    pub intrinsic_loss: f64,
}

/// Produces (noisy) log-utilities for the current point and a proposal at
/// iteration `k`.
pub trait PairEvaluator {
    fn evaluate(&mut self, k: usize, current: &ParamVector, proposal: &ParamVector) -> Result<PairEvaluation>;
}

/// The Metropolis loop, independent of how utilities are estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metropolis {
    pub iterations: usize,
    pub sigma_p: f64,
    pub prior: PriorKind,
    pub seed: u64,
}

impl Metropolis {
    pub fn run<E: PairEvaluator + ?Sized>(&self, init: ParamVector, evaluator: &mut E) -> Result<Vec<ChainRecord>> {
        let mut theta = init;
        let mut records = Vec::with_capacity(self.iterations);
        for k in 1..=self.iterations {
            let proposal = propose(&theta, self.sigma_p, &mut stream(self.seed, &[tag::PROPOSAL, k as u64]));
            let eval = evaluator
                .evaluate(k, &theta, &proposal)
                .map_err(|e| Error::Iteration {
                    iteration: k,
                    source: Box::new(e),
                })?;
            let log_num = prior_log_density(&proposal, self.prior) + eval.proposal.log_utility;
            let log_den = prior_log_density(&theta, self.prior) + eval.current.log_utility;
            let accepted = mh_accept(log_num, log_den, &mut stream(self.seed, &[tag::ACCEPT, k as u64]));
            let mean_return = if accepted {
                theta = proposal;
                eval.proposal.mean_return
            } else {
                eval.current.mean_return
            };
            records.push(ChainRecord {
                k,
                theta: theta.clone(),
                accepted,
                log_utility_current: eval.current.log_utility,
                log_utility_proposal: eval.proposal.log_utility,
                mean_return,
                intrinsic_loss: eval.intrinsic_loss,
            });
        }
        Ok(records)
    }
}

/// Utility from a deterministic score function of the parameters, e.g. a
/// synthetic target with known moments.
pub struct DeterministicEvaluator<F> {
    score: F,
    temperature: f64,
}

impl<F: FnMut(&ParamVector) -> f64> DeterministicEvaluator<F> {
    pub fn new(score: F, temperature: f64) -> Self {
        Self { score, temperature }
    }

    fn side(&mut self, theta: &ParamVector) -> Result<SideEvaluation> {
        let g = (self.score)(theta);
        Ok(SideEvaluation {
            log_utility: log_mean_exp_utility(&[g], self.temperature)?.value(),
            mean_return: g,
        })
    }
}

impl<F: FnMut(&ParamVector) -> f64> PairEvaluator for DeterministicEvaluator<F> {
    fn evaluate(&mut self, _k: usize, current: &ParamVector, proposal: &ParamVector) -> Result<PairEvaluation> {
        Ok(PairEvaluation {
            current: self.side(current)?,
            proposal: self.side(proposal)?,
            intrinsic_loss: 0.0,
        })
    }
}

/// Shared rollout machinery for the environment-backed evaluators.
#[derive(Debug, Clone)]
struct Rollouts {
    env: Env,
    spec: PolicySpec,
    encoder: StateEncoder,
    episodes: usize,
    gamma: f64,
    seed: u64,
    bootstrap: Bootstrap,
    td_form: TdForm,
}

impl Rollouts {
    fn new(config: &SamplerConfig) -> Result<Self> {
        let env = config.env.build()?;
        let env_spec = env.spec();
        let encoder = StateEncoder::for_env(&env_spec);
        Ok(Self {
            spec: PolicySpec::for_env(&env_spec, config.hidden),
            env,
            encoder,
            episodes: config.episodes,
            gamma: config.gamma,
            seed: config.seed,
            bootstrap: config.bootstrap,
            td_form: config.td_form,
        })
    }

    /// N episodes on independent streams `[side, k, i]`, in episode order.
    fn batch(&self, policy: &Policy, side: u64, k: usize) -> Result<Vec<Trajectory>> {
        (0..self.episodes)
            .into_par_iter()
            .map(|i| {
                let mut env = self.env.clone();
                let mut streams = EpisodeStreams::new(self.seed, &[side, k as u64, i as u64]);
                rollout(&mut env, policy, &self.encoder, &mut streams)
            })
            .collect()
    }

    /// Episodes standing for the proposal, plus one return per episode.
    fn proposal_side(
        &self,
        k: usize,
        current: &Policy,
        proposal: &Policy,
        stored: &[Trajectory],
    ) -> Result<(Vec<Trajectory>, Vec<f64>)> {
        let trajs = match self.bootstrap {
            Bootstrap::Off => self.batch(proposal, tag::CANDIDATE, k)?,
            Bootstrap::Resimulate => stored
                .par_iter()
                .enumerate()
                .map(|(i, src)| {
                    let mut env = self.env.clone();
                    // same action stream as the stored episode
                    let mut streams = EpisodeStreams::new(self.seed, &[tag::CURRENT, k as u64, i as u64]);
                    resimulate(proposal, src, i, &mut env, &self.encoder, &mut streams.actions).map(|c| c.trajectory)
                })
                .collect::<Result<Vec<_>>>()?,
            Bootstrap::Importance => {
                let est = bootstrap_return(proposal, current, &self.encoder, stored, self.gamma, self.td_form)?;
                return Ok((stored.to_vec(), vec![est.estimate; stored.len()]));
            }
        };
        let returns = trajs.iter().map(|t| t.discounted_return(self.gamma)).collect();
        Ok((trajs, returns))
    }

    fn returns(&self, trajs: &[Trajectory]) -> Vec<f64> {
        trajs.iter().map(|t| t.discounted_return(self.gamma)).collect()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Monte Carlo-within-Metropolis: both points are estimated from fresh
/// episodes every iteration.
pub struct RolloutEvaluator {
    rollouts: Rollouts,
    temperature: f64,
    reevaluate_current: bool,
    cache: Vec<(ParamVector, SideEvaluation)>,
}

impl RolloutEvaluator {
    pub fn new(config: &SamplerConfig) -> Result<Self> {
        Ok(Self {
            rollouts: Rollouts::new(config)?,
            temperature: config.utility.temperature,
            reevaluate_current: config.reevaluate_current,
            cache: Vec::new(),
        })
    }

    fn side(&self, returns: &[f64]) -> Result<SideEvaluation> {
        Ok(SideEvaluation {
            log_utility: log_mean_exp_utility(returns, self.temperature)?.value(),
            mean_return: mean(returns),
        })
    }
}

impl PairEvaluator for RolloutEvaluator {
    fn evaluate(&mut self, k: usize, current: &ParamVector, proposal: &ParamVector) -> Result<PairEvaluation> {
        let r = &self.rollouts;
        let cur_policy = Policy::new(&r.spec, current)?;
        let prop_policy = Policy::new(&r.spec, proposal)?;
        let cached = if self.reevaluate_current {
            None
        } else {
            self.cache.iter().find(|(t, _)| t.same_bits(current)).map(|(_, e)| *e)
        };
        let needs_stored = cached.is_none() || r.bootstrap != Bootstrap::Off;
        let stored = if needs_stored {
            r.batch(&cur_policy, tag::CURRENT, k)?
        } else {
            Vec::new()
        };
        let current_eval = match cached {
            Some(e) => e,
            None => self.side(&r.returns(&stored))?,
        };
        let (_, prop_returns) = r.proposal_side(k, &cur_policy, &prop_policy, &stored)?;
        let proposal_eval = self.side(&prop_returns)?;
        if !self.reevaluate_current {
            self.cache = vec![(current.clone(), current_eval), (proposal.clone(), proposal_eval)];
        }
        Ok(PairEvaluation {
            current: current_eval,
            proposal: proposal_eval,
            intrinsic_loss: 0.0,
        })
    }
}

/// Curiosity-augmented evaluation: the current point's episodes are stored,
/// the proposal's are derived from them, and each episode's score mixes its
/// return with the curiosity net's prediction error. The net trains on the
/// proposal's episodes only and persists across iterations.
pub struct CameoEvaluator {
    rollouts: Rollouts,
    curiosity: CuriosityNet,
    utility: UtilityConfig,
}

impl CameoEvaluator {
    pub fn new(config: &SamplerConfig) -> Result<Self> {
        let rollouts = Rollouts::new(config)?;
        let curiosity = CuriosityNet::new(
            rollouts.encoder.clone(),
            config.curiosity,
            &mut stream(config.seed, &[tag::CURIOSITY]),
        )?;
        Ok(Self {
            rollouts,
            curiosity,
            utility: config.utility,
        })
    }

    pub fn curiosity(&self) -> &CuriosityNet {
        &self.curiosity
    }
}

impl PairEvaluator for CameoEvaluator {
    fn evaluate(&mut self, k: usize, current: &ParamVector, proposal: &ParamVector) -> Result<PairEvaluation> {
        let r = &self.rollouts;
        let cur_policy = Policy::new(&r.spec, current)?;
        let prop_policy = Policy::new(&r.spec, proposal)?;
        let stored = r.batch(&cur_policy, tag::CURRENT, k)?;
        let (counterfactual, prop_returns) = r.proposal_side(k, &cur_policy, &prop_policy, &stored)?;
        let cur_returns = r.returns(&stored);

        let mut cur_losses = Vec::with_capacity(stored.len());
        let mut prop_losses = Vec::with_capacity(stored.len());
        for (src, cf) in stored.iter().zip(&counterfactual) {
            cur_losses.push(self.curiosity.trajectory_loss(src)?);
            prop_losses.push(self.curiosity.train_on_trajectory(cf)?);
        }

        let mu = self.utility.mu;
        let scale = self.curiosity.config().scale;
        let mixed = |returns: &[f64], losses: &[f64]| -> Vec<f64> {
            returns.iter().zip(losses).map(|(g, l)| mixed_reward(*g, scale * l, mu)).collect()
        };
        let t = self.utility.temperature;
        Ok(PairEvaluation {
            current: SideEvaluation {
                log_utility: log_mean_exp_utility(&mixed(&cur_returns, &cur_losses), t)?.value(),
                mean_return: mean(&cur_returns),
            },
            proposal: SideEvaluation {
                log_utility: log_mean_exp_utility(&mixed(&prop_returns, &prop_losses), t)?.value(),
                mean_return: mean(&prop_returns),
            },
            intrinsic_loss: mean(&prop_losses),
        })
    }
}

fn metropolis_for(config: &SamplerConfig) -> Metropolis {
    Metropolis {
        iterations: config.iterations,
        sigma_p: config.sigma_p,
        prior: config.utility.prior,
        seed: config.seed,
    }
}

fn initial_for(config: &SamplerConfig) -> Result<ParamVector> {
    Ok(initial_theta(config.policy_spec()?.dim(), config.sigma_p, config.seed))
}

pub fn run_plain_chain(config: &SamplerConfig) -> Result<Vec<ChainRecord>> {
    config.validate()?;
    if config.mode != Mode::Plain {
        return Err(Error::invalid("run_plain_chain needs mode=plain"));
    }
    let mut evaluator = RolloutEvaluator::new(config)?;
    metropolis_for(config).run(initial_for(config)?, &mut evaluator)
}

pub fn run_cameo_chain(config: &SamplerConfig) -> Result<Vec<ChainRecord>> {
    config.validate()?;
    if config.mode != Mode::Cameo {
        return Err(Error::invalid("run_cameo_chain needs mode=cameo"));
    }
    let mut evaluator = CameoEvaluator::new(config)?;
    metropolis_for(config).run(initial_for(config)?, &mut evaluator)
}

pub fn run_chain(config: &SamplerConfig) -> Result<Vec<ChainRecord>> {
    match config.mode {
        Mode::Plain => run_plain_chain(config),
        Mode::Cameo => run_cameo_chain(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq_norm(t: &ParamVector) -> f64 {
        t.as_slice().iter().map(|v| v * v).sum()
    }

    #[test]
    fn zero_step_proposal_is_identity() {
        let theta = ParamVector::new(vec![0.3, -1.2, 4.0]).unwrap();
        assert_eq!(propose(&theta, 0.0, &mut stream(1, &[])), theta);
    }

    #[test]
    fn proposal_moments() {
        let theta = ParamVector::new(vec![1.5, -0.5]).unwrap();
        let mut rng = stream(2, &[]);
        let n = 100_000;
        let sigma = 0.1;
        let draws: Vec<ParamVector> = (0..n).map(|_| propose(&theta, sigma, &mut rng)).collect();
        for j in 0..2 {
            let m = draws.iter().map(|d| d.as_slice()[j]).sum::<f64>() / n as f64;
            let v = draws.iter().map(|d| (d.as_slice()[j] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((v.sqrt() / sigma - 1.0).abs() < 0.02);
            let se = sigma / (n as f64).sqrt();
            assert!((m - theta.as_slice()[j]).abs() < 3.0 * se);
        }
    }

    #[test]
    fn accept_examples() {
        let mut rng = stream(3, &[]);
        assert!((0..10_000).all(|_| mh_accept(1.7, 1.7, &mut rng)));
        assert!((0..10_000).all(|_| mh_accept(50.0, -50.0, &mut rng)));
        let n = 100_000;
        let hits = (0..n).filter(|_| mh_accept(0.5f64.ln(), 0.0, &mut rng)).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn degenerate_zero_step_chain_accepts_everything() {
        let mut eval = DeterministicEvaluator::new(|t: &ParamVector| -sq_norm(t), 1.0);
        let m = Metropolis {
            iterations: 200,
            sigma_p: 0.0,
            prior: PriorKind::Uniform,
            seed: 4,
        };
        let init = ParamVector::new(vec![0.4, -0.2]).unwrap();
        let chain = m.run(init.clone(), &mut eval).unwrap();
        assert!(chain.iter().all(|r| r.accepted && r.theta == init));
    }

    #[test]
    fn rejected_steps_keep_state() {
        let mut eval = DeterministicEvaluator::new(|t: &ParamVector| -sq_norm(t), 1.0);
        let m = Metropolis {
            iterations: 2000,
            sigma_p: 1.0,
            prior: PriorKind::Uniform,
            seed: 5,
        };
        let chain = m.run(initial_theta(2, 1.0, 5), &mut eval).unwrap();
        assert_eq!(chain.len(), 2000);
        assert!(chain.iter().any(|r| !r.accepted));
        for w in chain.windows(2) {
            if !w[1].accepted {
                assert!(w[1].theta.same_bits(&w[0].theta));
            }
        }
    }

    #[test]
    fn constant_offset_does_not_change_decisions() {
        let m = Metropolis {
            iterations: 500,
            sigma_p: 0.7,
            prior: PriorKind::Uniform,
            seed: 6,
        };
        let a = m
            .run(initial_theta(3, 0.7, 6), &mut DeterministicEvaluator::new(|t: &ParamVector| -sq_norm(t), 1.0))
            .unwrap();
        let b = m
            .run(
                initial_theta(3, 0.7, 6),
                &mut DeterministicEvaluator::new(|t: &ParamVector| 1234.5 - sq_norm(t), 1.0),
            )
            .unwrap();
        let acc = |c: &[ChainRecord]| c.iter().map(|r| r.accepted).collect::<Vec<_>>();
        assert_eq!(acc(&a), acc(&b));
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig::new(EnvKind::Gridworld, Mode::Plain);
        assert!(c.validate().is_ok());
        c.sigma_p = 0.0;
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::new(EnvKind::CartPole, Mode::Plain);
        c.bootstrap = Bootstrap::Importance;
        assert!(matches!(c.validate(), Err(Error::Unsupported(_))));
        let mut c = SamplerConfig::new(EnvKind::Gridworld, Mode::Plain);
        c.iterations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn plain_chain_is_reproducible() {
        let mut c = SamplerConfig::new(EnvKind::Gridworld, Mode::Plain);
        c.iterations = 30;
        c.episodes = 5;
        c.seed = 9;
        let a = run_plain_chain(&c).unwrap();
        let b = run_plain_chain(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
    }

    #[test]
    fn cameo_with_pure_extrinsic_reward_matches_plain() {
        let mut plain = SamplerConfig::new(EnvKind::Gridworld, Mode::Plain);
        plain.iterations = 40;
        plain.episodes = 6;
        plain.seed = 21;
        plain.utility.prior = PriorKind::BoundaryPenalty;
        let mut cameo = plain.clone();
        cameo.mode = Mode::Cameo;
        cameo.utility.mu = 1.0;
        cameo.bootstrap = Bootstrap::Off;
        let a = run_plain_chain(&plain).unwrap();
        let b = run_cameo_chain(&cameo).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.k, y.k);
            assert_eq!(x.accepted, y.accepted);
            assert!(x.theta.same_bits(&y.theta));
            assert_eq!(x.log_utility_current.to_bits(), y.log_utility_current.to_bits());
            assert_eq!(x.log_utility_proposal.to_bits(), y.log_utility_proposal.to_bits());
            assert_eq!(x.mean_return.to_bits(), y.mean_return.to_bits());
            assert!(y.intrinsic_loss > 0.0);
        }
    }

    #[test]
    fn cached_current_reuses_estimates() {
        let mut c = SamplerConfig::new(EnvKind::Gridworld, Mode::Plain);
        c.iterations = 30;
        c.episodes = 4;
        c.reevaluate_current = false;
        let chain = run_plain_chain(&c).unwrap();
        for w in chain.windows(2) {
            // the current point of iteration k+1 is the chain state after k
            let expected = if w[0].accepted {
                w[0].log_utility_proposal
            } else {
                w[0].log_utility_current
            };
            assert_eq!(w[1].log_utility_current, expected);
        }
    }

    #[test]
    fn curiosity_never_alters_current_episodes() {
        // same seed, different curiosity settings: the stored episodes of the
        // first iteration (and hence its mean return if rejected) match
        let mut a = SamplerConfig::new(EnvKind::Gridworld, Mode::Cameo);
        a.iterations = 1;
        a.episodes = 5;
        let mut b = a.clone();
        b.curiosity.learning_rate = 0.5;
        b.utility.mu = 0.0;
        let ra = RolloutEvaluator::new(&a).unwrap();
        let spec = a.policy_spec().unwrap();
        let theta = initial_theta(spec.dim(), 0.1, 0);
        let policy = Policy::new(&spec, &theta).unwrap();
        let rb = RolloutEvaluator::new(&b).unwrap();
        assert_eq!(
            ra.rollouts.batch(&policy, tag::CURRENT, 1).unwrap(),
            rb.rollouts.batch(&policy, tag::CURRENT, 1).unwrap()
        );
        let ca = run_cameo_chain(&a).unwrap();
        let cb = run_cameo_chain(&b).unwrap();
        assert_eq!(ca[0].log_utility_current.is_finite(), cb[0].log_utility_current.is_finite());
    }

    #[test]
    fn iteration_errors_carry_index() {
        struct Failing;
        impl PairEvaluator for Failing {
            fn evaluate(&mut self, k: usize, _: &ParamVector, _: &ParamVector) -> Result<PairEvaluation> {
                if k == 3 {
                    Err(Error::invalid("boom"))
                } else {
                    Ok(PairEvaluation {
                        current: SideEvaluation {
                            log_utility: 0.0,
                            mean_return: 0.0,
                        },
                        proposal: SideEvaluation {
                            log_utility: 0.0,
                            mean_return: 0.0,
                        },
                        intrinsic_loss: 0.0,
                    })
                }
            }
        }
        let m = Metropolis {
            iterations: 10,
            sigma_p: 0.1,
            prior: PriorKind::Uniform,
            seed: 0,
        };
        match m.run(ParamVector::zeros(2), &mut Failing) {
            Err(Error::Iteration { iteration, .. }) => assert_eq!(iteration, 3),
            other => panic!("{other:?}"),
        }
    }
}
