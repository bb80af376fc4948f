use std::f64::consts::PI;

use rand::Rng;

use super::{check_action, EnvSpec, EnvState, StateKind, Transition};
use crate::error::{Error, Result};

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const CAP: usize = 500;

/// Time derivative of `(q1, q2, q1_dot, q2_dot)` under the applied torque.
fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let l1 = LINK_LENGTH_1;
    let (lc1, lc2) = (LINK_COM_1, LINK_COM_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let [q1, q2, dq1, dq2] = s;

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * q2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * q2.cos()) + i2;
    let phi2 = m2 * lc2 * GRAVITY * (q1 + q2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dq2 * dq2 * q2.sin() - 2.0 * m2 * l1 * lc2 * dq2 * dq1 * q2.sin()
        + (m1 * lc1 + m2 * l1) * GRAVITY * (q1 - PI / 2.0).cos()
        + phi2;
    let ddq2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dq1 * dq1 * q2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddq1 = -(d2 * ddq2 + phi1) / d1;
    [dq1, dq2, ddq1, ddq2]
}

fn rk4(s: [f64; 4], torque: f64) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], h: f64| [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]];
    let k1 = derivatives(s, torque);
    let k2 = derivatives(add(s, k1, DT / 2.0), torque);
    let k3 = derivatives(add(s, k2, DT / 2.0), torque);
    let k4 = derivatives(add(s, k3, DT), torque);
    let mut out = s;
    for i in 0..4 {
        out[i] += DT / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap_angle(mut x: f64) -> f64 {
    while x > PI {
        x -= 2.0 * PI;
    }
    while x < -PI {
        x += 2.0 * PI;
    }
    x
}

fn reached_height(s: &[f64; 4]) -> bool {
    -s[0].cos() - (s[0] + s[1]).cos() > 1.0
}

/// `(cos q1, sin q1, cos q2, sin q2, q1_dot, q2_dot)`.
pub(super) fn observation(s: &[f64; 4]) -> [f64; 6] {
    let (s1, c1) = s[0].sin_cos();
    let (s2, c2) = s[1].sin_cos();
    [c1, s1, c2, s2, s[2], s[3]]
}

/// One RK4 step of the two-link acrobot with torque `action - 1`.
pub fn acrobot_step(state: [f64; 4], action: usize) -> Result<Transition> {
    check_action(action, 3)?;
    let torque = action as f64 - 1.0;
    let raw = rk4(state, torque);
    let next = [
        wrap_angle(raw[0]),
        wrap_angle(raw[1]),
        raw[2].clamp(-MAX_VEL_1, MAX_VEL_1),
        raw[3].clamp(-MAX_VEL_2, MAX_VEL_2),
    ];
    Ok(Transition {
        state: EnvState::Physical(state),
        action,
        reward: -1.0,
        next_state: EnvState::Physical(next),
        done: reached_height(&next),
    })
}

#[derive(Debug, Clone)]
pub struct Acrobot {
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new()
    }
}

impl Acrobot {
    pub fn new() -> Self {
        Self {
            state: [0.0; 4],
            steps: 0,
            done: false,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "acrobot",
            state_kind: StateKind::Continuous {
                dim: 6,
                bounds: vec![1.0, 1.0, 1.0, 1.0, MAX_VEL_1, MAX_VEL_2],
            },
            n_actions: 3,
            episode_cap: CAP,
            reward_doc: "-1 per time step",
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EnvState {
        for v in self.state.iter_mut() {
            *v = rng.random_range(-0.1..=0.1);
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
            other => Err(Error::invalid(format!("{other:?} is not an acrobot state"))),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let mut tr = acrobot_step(self.state, action)?;
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

#[cfg(test)]
mod tests {
    use super::*;

    /// Acrobot equations of motion transcribed separately, in matrix form:
    /// M(q) q_dd + h(q, q_d) = tau.
    fn oracle_accel(q1: f64, q2: f64, w1: f64, w2: f64, tau: f64) -> (f64, f64) {
        let g = 9.8;
        let m11 = 1.0 * 0.25 + 1.0 * (1.0 + 0.25 + 2.0 * 0.5 * q2.cos()) + 2.0;
        let m12 = 1.0 * (0.25 + 0.5 * q2.cos()) + 1.0;
        let p2 = 0.5 * g * (q1 + q2 - PI / 2.0).cos();
        let p1 = -0.5 * w2 * w2 * q2.sin() - w2 * w1 * q2.sin() + 1.5 * g * (q1 - PI / 2.0).cos() + p2;
        let a2 = (tau + m12 / m11 * p1 - 0.5 * w1 * w1 * q2.sin() - p2) / (0.25 + 1.0 - m12 * m12 / m11);
        let a1 = -(m12 * a2 + p1) / m11;
        (a1, a2)
    }

    fn oracle_step(s: [f64; 4], tau: f64) -> [f64; 4] {
        let f = |y: [f64; 4]| {
            let (a1, a2) = oracle_accel(y[0], y[1], y[2], y[3], tau);
            [y[2], y[3], a1, a2]
        };
        let h = 0.2;
        let k1 = f(s);
        let y2: Vec<f64> = (0..4).map(|i| s[i] + 0.5 * h * k1[i]).collect();
        let k2 = f([y2[0], y2[1], y2[2], y2[3]]);
        let y3: Vec<f64> = (0..4).map(|i| s[i] + 0.5 * h * k2[i]).collect();
        let k3 = f([y3[0], y3[1], y3[2], y3[3]]);
        let y4: Vec<f64> = (0..4).map(|i| s[i] + h * k3[i]).collect();
        let k4 = f([y4[0], y4[1], y4[2], y4[3]]);
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    #[test]
    fn rest_is_not_done() {
        assert!(!reached_height(&[0.0; 4]));
        let tr = acrobot_step([0.0; 4], 1).unwrap();
        assert!(!tr.done);
        assert_eq!(tr.reward, -1.0);
    }

    #[test]
    fn torque_step_matches_oracle() {
        for (action, tau) in [(0, -1.0), (2, 1.0)] {
            let EnvState::Physical(next) = acrobot_step([0.0; 4], action).unwrap().next_state else { panic!() };
            let expected = oracle_step([0.0; 4], tau);
            for (a, b) in next.iter().zip(expected) {
                assert!((a - b).abs() < 1e-12, "{next:?} vs {expected:?}");
            }
        }
        let s = [0.3, -0.7, 1.2, -2.0];
        let EnvState::Physical(next) = acrobot_step(s, 2).unwrap().next_state else { panic!() };
        for (a, b) in next.iter().zip(oracle_step(s, 1.0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn idle_episode_hits_cap() {
        let mut env = Acrobot::new();
        env.reset_to(EnvState::Physical([0.0; 4])).unwrap();
        let mut ret = 0.0;
        loop {
            let tr = env.step(1).unwrap();
            ret += tr.reward;
            if tr.done {
                break;
            }
        }
        assert_eq!(ret, -500.0);
    }

    #[test]
    fn observation_shape() {
        let obs = observation(&[0.0, 0.0, 1.0, -2.0]);
        assert_eq!(obs, [1.0, 0.0, 1.0, 0.0, 1.0, -2.0]);
    }
}
