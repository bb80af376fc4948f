//! Softmax policies over discrete actions, parameterized by a flat vector.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::env::{EnvSpec, EnvState, StateKind};
use crate::error::{Error, Result};
use crate::nn::{DenseNet, OutputActivation};

/// Flat policy parameters; the Markov chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parameter {j} is not finite ({})", values[j])));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Bitwise equality, used to detect repeated chain states.
    pub fn same_bits(&self, other: &ParamVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    OneHot,
    Raw,
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::OneHot => "one_hot",
            Encoding::Raw => "raw",
        })
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_hot" | "onehot" => Ok(Encoding::OneHot),
            "raw" => Ok(Encoding::Raw),
            other => Err(Error::invalid(format!("unknown encoding '{other}'"))),
        }
    }
}

/// Maps environment states to network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoder {
    kind: StateKind,
    encoding: Encoding,
}

impl StateEncoder {
    pub fn new(env: &EnvSpec, encoding: Encoding) -> Result<Self> {
        if encoding == Encoding::OneHot && !env.is_tabular() {
            return Err(Error::Encoding(format!("{} has continuous states; one-hot needs a tabular env", env.name)));
        }
        Ok(Self {
            kind: env.state_kind.clone(),
            encoding,
        })
    }

    /// The default encoding: one-hot for grids, scaled raw observations otherwise.
    pub fn for_env(env: &EnvSpec) -> Self {
        let encoding = if env.is_tabular() { Encoding::OneHot } else { Encoding::Raw };
        Self::new(env, encoding).unwrap()
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn dim(&self) -> usize {
        match (&self.kind, self.encoding) {
            (StateKind::Tabular { n_states, .. }, Encoding::OneHot) => *n_states,
            (StateKind::Tabular { .. }, Encoding::Raw) => 1,
            (StateKind::Continuous { dim, .. }, _) => *dim,
        }
    }

    pub fn encode(&self, state: &EnvState) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(state, &mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, state: &EnvState, out: &mut [f64]) -> Result<()> {
        match (&self.kind, state) {
            (StateKind::Tabular { n_states, .. }, EnvState::Cell(c)) => {
                if c >= n_states {
                    return Err(Error::Encoding(format!("cell {c} out of range 0..{n_states}")));
                }
                match self.encoding {
                    Encoding::OneHot => {
                        out.fill(0.0);
                        out[*c] = 1.0;
                    }
                    Encoding::Raw => out[0] = 2.0 * *c as f64 / (*n_states as f64 - 1.0).max(1.0) - 1.0,
                }
            }
            (StateKind::Continuous { dim, bounds }, EnvState::Physical(s)) => {
                let obs: Vec<f64> = match *dim {
                    4 => s.to_vec(),
                    6 => {
                        let (s1, c1) = s[0].sin_cos();
                        let (s2, c2) = s[1].sin_cos();
                        vec![c1, s1, c2, s2, s[2], s[3]]
                    }
                    d => return Err(Error::Encoding(format!("no observation map for dimension {d}"))),
                };
                for ((o, v), b) in out.iter_mut().zip(obs).zip(bounds) {
                    *o = (v / b).clamp(-1.0, 1.0);
                }
            }
            (_, other) => return Err(Error::Encoding(format!("state {other:?} does not match the environment"))),
        }
        Ok(())
    }
}

/// Network shape of a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicySpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_actions: usize,
    pub encoding: Encoding,
}

impl PolicySpec {
    pub const DEFAULT_HIDDEN: usize = 8;

    pub fn for_env(env: &EnvSpec, hidden: usize) -> Self {
        let encoder = StateEncoder::for_env(env);
        Self {
            input_dim: encoder.dim(),
            hidden,
            n_actions: env.n_actions,
            encoding: encoder.encoding(),
        }
    }

    pub fn layer_sizes(&self) -> [usize; 3] {
        [self.input_dim, self.hidden, self.n_actions]
    }

    /// Parameter dimension D.
    pub fn dim(&self) -> usize {
        self.hidden * (self.input_dim + 1) + self.n_actions * (self.hidden + 1)
    }
}

/// A policy network instantiated from one parameter vector.
#[derive(Debug, Clone)]
pub struct Policy {
    net: DenseNet,
}

impl Policy {
    pub fn new(spec: &PolicySpec, theta: &ParamVector) -> Result<Self> {
        let net = DenseNet::from_flat(&spec.layer_sizes(), OutputActivation::Softmax, theta.as_slice())?;
        Ok(Self { net })
    }

    pub fn action_probs(&self, encoded_state: &[f64]) -> Result<Vec<f64>> {
        let logits = self.net.logits(encoded_state)?;
        if logits.iter().any(|v| !v.is_finite()) {
            let theta = ParamVector(self.net.flatten());
            return Err(Error::Numeric {
                layer: self.net.layer_sizes().len() - 2,
                what: format!("non-finite logits {logits:?} from theta with norm {}", theta.norm()),
            });
        }
        Ok(crate::nn::softmax(&logits))
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, encoded_state: &[f64], rng: &mut R) -> Result<usize> {
        let probs = self.action_probs(encoded_state)?;
        Ok(sample_index(&probs, rng))
    }

    pub fn greedy_action(&self, encoded_state: &[f64]) -> Result<usize> {
        let probs = self.action_probs(encoded_state)?;
        Ok(probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, p)| if *p > probs[best] { i } else { best }))
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; fall back to the last
    // action with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn action_probs(spec: &PolicySpec, theta: &ParamVector, encoded_state: &[f64]) -> Result<Vec<f64>> {
    Policy::new(spec, theta)?.action_probs(encoded_state)
}

pub fn sample_action<R: Rng + ?Sized>(
    spec: &PolicySpec,
    theta: &ParamVector,
    encoded_state: &[f64],
    rng: &mut R,
) -> Result<usize> {
    Policy::new(spec, theta)?.sample_action(encoded_state, rng)
}

pub fn encode_state(env: &EnvSpec, encoding: Encoding, state: &EnvState) -> Result<Vec<f64>> {
    StateEncoder::new(env, encoding)?.encode(state)
}
