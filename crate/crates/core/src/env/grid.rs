use super::{check_action, EnvSpec, EnvState, StateKind, Transition};
use crate::error::{Error, Result};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

const STEP_REWARD: f64 = -1.0;
const GOAL_REWARD: f64 = 10.0;
const PIT_REWARD: f64 = -10.0;

/// Row-major grid with a start cell, one goal and a set of pit cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub start: usize,
    pub goal: usize,
    pub pits: Vec<usize>,
    pub pit_terminates: bool,
}

impl GridLayout {
    pub const GRIDWORLD_PIT: usize = 5;

    /// 4x4, start top-left (0), goal bottom-right (15), one pit.
    pub fn gridworld() -> Self {
        Self::gridworld_with_pit(Self::GRIDWORLD_PIT).unwrap()
    }

    pub fn gridworld_with_pit(pit: usize) -> Result<Self> {
        if pit == 0 || pit >= 15 {
            return Err(Error::invalid(format!(
                "gridworld pit must be a cell in 1..15 other than start and goal, got {pit}"
            )));
        }
        Ok(Self {
            rows: 4,
            cols: 4,
            start: 0,
            goal: 15,
            pits: vec![pit],
            pit_terminates: true,
        })
    }

    /// 4x12 cliff walk: start 36, goal 47, cliff 37..=46 along the bottom row.
    pub fn cliff() -> Self {
        Self {
            rows: 4,
            cols: 12,
            start: 36,
            goal: 47,
            pits: (37..=46).collect(),
            pit_terminates: true,
        }
    }

    pub fn n_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_pit(&self, cell: usize) -> bool {
        self.pits.contains(&cell)
    }

    /// Cell reached by moving, clamped at the walls.
    pub fn neighbor(&self, cell: usize, action: usize) -> usize {
        let (r, c) = (cell / self.cols, cell % self.cols);
        let (r, c) = match action {
            UP => (r.saturating_sub(1), c),
            RIGHT => (r, (c + 1).min(self.cols - 1)),
            DOWN => ((r + 1).min(self.rows - 1), c),
            _ => (r, c.saturating_sub(1)),
        };
        r * self.cols + c
    }
}

/// One deterministic grid move, without the episode cap.
pub fn grid_step(layout: &GridLayout, state: usize, action: usize) -> Result<Transition> {
    check_action(action, 4)?;
    if state >= layout.n_states() || state == layout.goal || (layout.pit_terminates && layout.is_pit(state)) {
        return Err(Error::invalid(format!("cell {state} is not a live state")));
    }
    let target = layout.neighbor(state, action);
    let (reward, next, done) = if target == layout.goal {
        (GOAL_REWARD, target, true)
    } else if layout.is_pit(target) {
        if layout.pit_terminates {
            (PIT_REWARD, target, true)
        } else {
            (PIT_REWARD, layout.start, false)
        }
    } else {
        (STEP_REWARD, target, false)
    };
    Ok(Transition {
        state: EnvState::Cell(state),
        action,
        reward,
        next_state: EnvState::Cell(next),
        done,
    })
}

#[derive(Debug, Clone)]
pub struct GridEnv {
    name: &'static str,
    layout: GridLayout,
    cap: usize,
    current: usize,
    steps: usize,
    done: bool,
}

impl GridEnv {
    pub fn new(name: &'static str, layout: GridLayout, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::invalid("episode cap must be positive"));
        }
        let start = layout.start;
        Ok(Self {
            name,
            layout,
            cap,
            current: start,
            steps: 0,
            done: false,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: self.name,
            state_kind: StateKind::Tabular {
                n_states: self.layout.n_states(),
                rows: self.layout.rows,
                cols: self.layout.cols,
            },
            n_actions: 4,
            episode_cap: self.cap,
            reward_doc: "-1 per move, 10 for the goal and -10 for the pit",
        }
    }

    pub fn reset(&mut self) -> EnvState {
        self.current = self.layout.start;
        self.steps = 0;
        self.done = false;
        EnvState::Cell(self.current)
    }

    pub fn reset_to(&mut self, state: EnvState) -> Result<()> {
        match state {
            EnvState::Cell(c) if c < self.layout.n_states() => {
                self.current = c;
                self.steps = 0;
                self.done = false;
                Ok(())
            }
            other => Err(Error::invalid(format!("{other:?} is not a grid cell"))),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let mut tr = grid_step(&self.layout, self.current, action)?;
        self.steps += 1;
        if self.steps >= self.cap {
            tr.done = true;
        }
        self.current = tr.next_state.cell().unwrap();
        self.done = tr.done;
        Ok(tr)
    }
}
