use rand::Rng;

use super::{check_action, EnvSpec, EnvState, StateKind, Transition};
use crate::error::{Error, Result};

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE: f64 = 10.0;
const DT: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const CAP: usize = 200;

/// Semi-implicit Euler step of the cart-pole equations. `state` is
/// `(x, x_dot, angle, angle_dot)`. The returned transition is terminal when
/// the cart or pole leaves its bounds; the episode cap is handled by
/// [`CartPole`].
pub fn cartpole_step(state: [f64; 4], action: usize) -> Result<Transition> {
    check_action(action, 2)?;
    let [x, x_dot, angle, angle_dot] = state;
    let force = if action == 1 { FORCE } else { -FORCE };
    let (sin, cos) = angle.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * angle_dot * angle_dot * sin) / TOTAL_MASS;
    let angle_acc =
        (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * angle_acc * cos / TOTAL_MASS;

    let x_dot = x_dot + DT * x_acc;
    let x = x + DT * x_dot;
    let angle_dot = angle_dot + DT * angle_acc;
    let angle = angle + DT * angle_dot;
    let next = [x, x_dot, angle, angle_dot];

    Ok(Transition {
        state: EnvState::Physical(state),
        action,
        reward: 1.0,
        next_state: EnvState::Physical(next),
        done: x.abs() > X_LIMIT || angle.abs() > ANGLE_LIMIT,
    })
}

#[derive(Debug, Clone)]
pub struct CartPole {
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            state: [0.0; 4],
            steps: 0,
            done: false,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "cartpole",
            // velocities are clamped to these scales before encoding
            state_kind: StateKind::Continuous {
                dim: 4,
                bounds: vec![X_LIMIT, 3.0, ANGLE_LIMIT, 3.5],
            },
            n_actions: 2,
            episode_cap: CAP,
            reward_doc: "+1 per time step",
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EnvState {
        for v in self.state.iter_mut() {
            *v = rng.random_range(-0.05..=0.05);
        }
        self.steps = 0;
        self.done = false;
        EnvState::Physical(self.state)
    }

    pub fn reset_to(&mut self, state: EnvState) -> Result<()> {
        match state {
            EnvState::Physical(s) if s.iter().all(|v| v.is_finite()) => {
                self.state = s;
                self.steps = 0;
                self.done = false;
                Ok(())
            }
            other => Err(Error::invalid(format!("{other:?} is not a cart-pole state"))),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let mut tr = cartpole_step(self.state, action)?;
        self.steps += 1;
        if self.steps >= CAP {
            tr.done = true;
        }
        if let EnvState::Physical(s) = tr.next_state {
            self.state = s;
        }
        self.done = tr.done;
        Ok(tr)
    }
}
