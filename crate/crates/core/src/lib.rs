//! Informative path planning as a POMDP solved with POMCP, where a policy
//! trained with PPO picks the solver parameters at every planning iteration.
//!
//! Module map:
//! - [`gp`]: Gaussian-process belief with incremental Cholesky updates.
//! - [`objective`]: entropy, probability and expected improvement rewards.
//! - [`world`]: ground-truth fields, lattice kinematics, sensing.
//! - [`pomcp`]: the Monte Carlo tree search planner and the t-test chain.
//! - [`nn`]: small MLPs, Adam and the squashed Gaussian policy head.
//! - [`agent`]: the parameter-selection MDP and PPO training.
//! - [`harness`]: episodes, experiment matrices and output files.

pub mod agent;
pub mod config;
pub mod error;
pub mod gp;
pub mod harness;
pub mod nn;
pub mod objective;
pub mod pomcp;
pub mod rng;
pub mod special;
pub mod world;

pub use error::{IppError, Result};
