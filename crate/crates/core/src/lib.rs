//! Desk-scale laboratory for consistent adversarial robust reinforcement
//! learning: exact tabular MDP machinery, Bellman/CAR operators with their
//! norm and seminorm error analysis, executable counterexample
//! constructions, a small dense network with manual gradients and interval
//! bound propagation, state-perturbation attacks, and the CAR-DQN / CAR-PPO
//! training loops.

pub mod error;
pub(crate) mod linalg;
pub mod mdp;

pub use error::{CoreError, Result};
pub mod operators;
pub mod soft;
pub mod counterexamples;
pub mod tinynet;
