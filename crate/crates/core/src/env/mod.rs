//! Episodic benchmark environments behind one interface.

mod acrobot;
mod cartpole;
mod grid;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use acrobot::{acrobot_step, Acrobot};
pub use cartpole::{cartpole_step, CartPole};
pub use grid::{grid_step, GridEnv, GridLayout, DOWN, LEFT, RIGHT, UP};

use crate::error::{Error, Result};

/// Full internal environment state. Grid states are cell indices; the
/// physical systems carry their four-dimensional configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvState {
    Cell(usize),
    Physical([f64; 4]),
}

impl EnvState {
    pub fn cell(&self) -> Option<usize> {
        match self {
            EnvState::Cell(c) => Some(*c),
            EnvState::Physical(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: usize,
    pub reward: f64,
    pub next_state: EnvState,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateKind {
    Tabular { n_states: usize, rows: usize, cols: usize },
    /// Observation dimension and a symmetric scale bound per coordinate.
    Continuous { dim: usize, bounds: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_kind: StateKind,
    pub n_actions: usize,
    pub episode_cap: usize,
    pub reward_doc: &'static str,
}

impl EnvSpec {
    pub fn is_tabular(&self) -> bool {
        matches!(self.state_kind, StateKind::Tabular { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Gridworld,
    Cliff,
    CartPole,
    Acrobot,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [EnvKind::Gridworld, EnvKind::Cliff, EnvKind::CartPole, EnvKind::Acrobot];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Gridworld => "gridworld",
            EnvKind::Cliff => "cliff",
            EnvKind::CartPole => "cartpole",
            EnvKind::Acrobot => "acrobot",
        }
    }

    pub fn is_tabular(self) -> bool {
        matches!(self, EnvKind::Gridworld | EnvKind::Cliff)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gridworld" => Ok(EnvKind::Gridworld),
            "cliff" => Ok(EnvKind::Cliff),
            "cartpole" => Ok(EnvKind::CartPole),
            "acrobot" => Ok(EnvKind::Acrobot),
            other => Err(Error::invalid(format!(
                "unknown environment '{other}' (expected gridworld, cliff, cartpole or acrobot)"
            ))),
        }
    }
}

/// Everything needed to build an environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Gridworld pit cell; ignored by the other environments.
    pub gridworld_pit: usize,
    /// Whether entering a pit or cliff cell ends the episode (otherwise the
    /// agent is sent back to the start).
    pub pit_terminates: bool,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            gridworld_pit: GridLayout::GRIDWORLD_PIT,
            pit_terminates: true,
        }
    }

    pub fn build(&self) -> Result<Env> {
        Ok(match self.kind {
            EnvKind::Gridworld => {
                let mut layout = GridLayout::gridworld_with_pit(self.gridworld_pit)?;
                layout.pit_terminates = self.pit_terminates;
                Env::Grid(GridEnv::new("gridworld", layout, 50)?)
            }
            EnvKind::Cliff => {
                let mut layout = GridLayout::cliff();
                layout.pit_terminates = self.pit_terminates;
                Env::Grid(GridEnv::new("cliff", layout, 100)?)
            }
            EnvKind::CartPole => Env::CartPole(CartPole::new()),
            EnvKind::Acrobot => Env::Acrobot(Acrobot::new()),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Env {
    Grid(GridEnv),
    CartPole(CartPole),
    Acrobot(Acrobot),
}

impl Env {
    pub fn spec(&self) -> EnvSpec {
        match self {
            Env::Grid(g) => g.spec(),
            Env::CartPole(c) => c.spec(),
            Env::Acrobot(a) => a.spec(),
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EnvState {
        match self {
            Env::Grid(g) => g.reset(),
            Env::CartPole(c) => c.reset(rng),
            Env::Acrobot(a) => a.reset(rng),
        }
    }

    /// Starts a new episode from a given state.
    pub fn reset_to(&mut self, state: EnvState) -> Result<()> {
        match self {
            Env::Grid(g) => g.reset_to(state),
            Env::CartPole(c) => c.reset_to(state),
            Env::Acrobot(a) => a.reset_to(state),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Transition> {
        match self {
            Env::Grid(g) => g.step(action),
            Env::CartPole(c) => c.step(action),
            Env::Acrobot(a) => a.step(action),
        }
    }

    pub fn grid_layout(&self) -> Option<&GridLayout> {
        match self {
            Env::Grid(g) => Some(g.layout()),
            _ => None,
        }
    }

    /// Raw observation of a state, before policy encoding.
    pub fn observe(&self, state: &EnvState) -> Result<Vec<f64>> {
        match (self, state) {
            (Env::Grid(_), EnvState::Cell(c)) => Ok(vec![*c as f64]),
            (Env::CartPole(_), EnvState::Physical(s)) => Ok(s.to_vec()),
            (Env::Acrobot(_), EnvState::Physical(s)) => Ok(acrobot::observation(s).to_vec()),
            _ => Err(Error::Encoding(format!("state {state:?} does not belong to {}", self.spec().name))),
        }
    }
}

fn check_action(action: usize, n_actions: usize) -> Result<()> {
    if action >= n_actions {
        return Err(Error::invalid(format!("action {action} out of range 0..{n_actions}")));
    }
    Ok(())
}
