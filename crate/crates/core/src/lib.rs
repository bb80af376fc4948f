//! Metropolis sampling over policy-network parameters for episodic control
//! tasks, with a curiosity-augmented variant for sparse rewards.
//!
//! The chain state is a flat parameter vector ([`policy::ParamVector`]) for a
//! small softmax MLP. Each iteration estimates an exponential utility of the
//! episode returns by Monte Carlo and accepts or rejects a Gaussian
//! random-walk proposal. [`sampler::run_chain`] is the main entry point;
//! [`diagnostics`] turns a finished chain into traces, similarity matrices
//! and visitation heatmaps, and [`io`] reads and writes them as CSV.

pub mod bootstrap;
pub mod cli;
pub mod config;
pub mod curiosity;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod io;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod rollout;
pub mod sampler;
pub mod target;

pub use env::{EnvConfig, EnvKind};
pub use error::{Error, Result};
pub use policy::ParamVector;
pub use sampler::{run_chain, ChainRecord, Mode, SamplerConfig};
