//! Episodes and their returns.

use rand::Rng;

use crate::env::{Env, EnvState, Transition};
use crate::error::{Error, Result};
use crate::policy::{Policy, StateEncoder};
use crate::rng::EpisodeStreams;

/// One episode: the initial state and every transition until `done`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: EnvState,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// `s_0, s_1, ..., s_L`.
    pub fn states(&self) -> impl Iterator<Item = EnvState> + '_ {
        std::iter::once(self.initial).chain(self.transitions.iter().map(|t| t.next_state))
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.transitions.iter().map(|t| t.reward)
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        crate::target::empirical_return(self, gamma)
    }

    pub fn final_state(&self) -> EnvState {
        self.transitions.last().map_or(self.initial, |t| t.next_state)
    }
}

/// Runs one episode from a fresh reset.
pub fn rollout(env: &mut Env, policy: &Policy, encoder: &StateEncoder, streams: &mut EpisodeStreams) -> Result<Trajectory> {
    let initial = env.reset(&mut streams.reset);
    run_episode(env, policy, encoder, initial, false, &mut streams.actions)
}

/// Runs one episode from a given initial state.
pub fn rollout_from<R: Rng + ?Sized>(
    env: &mut Env,
    policy: &Policy,
    encoder: &StateEncoder,
    initial: EnvState,
    actions: &mut R,
) -> Result<Trajectory> {
    env.reset_to(initial)?;
    run_episode(env, policy, encoder, initial, false, actions)
}

/// Runs one episode acting greedily. Inspection only; chains always sample.
pub fn greedy_rollout<R: Rng + ?Sized>(
    env: &mut Env,
    policy: &Policy,
    encoder: &StateEncoder,
    reset: &mut R,
) -> Result<Trajectory> {
    let initial = env.reset(reset);
    run_episode(env, policy, encoder, initial, true, reset)
}

fn run_episode<R: Rng + ?Sized>(
    env: &mut Env,
    policy: &Policy,
    encoder: &StateEncoder,
    initial: EnvState,
    greedy: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    let cap = env.spec().episode_cap;
    let mut x = vec![0.0; encoder.dim()];
    let mut state = initial;
    let mut transitions = Vec::new();
    loop {
        encoder.encode_into(&state, &mut x)?;
        let action = if greedy {
            policy.greedy_action(&x)?
        } else {
            policy.sample_action(&x, rng)?
        };
        let tr = env.step(action)?;
        transitions.push(tr);
        if tr.done {
            break;
        }
        if transitions.len() > cap {
            return Err(Error::invalid("environment exceeded its episode cap"));
        }
        state = tr.next_state;
    }
    Ok(Trajectory { initial, transitions })
}
