//! Quadruped gap-crossing laboratory.
//!
//! The stack is layered the same way the controller is:
//!
//! * [`rhythm`]: amplitude-controlled phase oscillators (one per limb).
//! * [`pattern`]: oscillator state to Cartesian foot targets, plus planar leg IK/FK.
//! * [`terrain`] and [`physics`]: gap terrain and a sagittal-plane articulated
//!   quadruped with spring-damper ground contact.
//! * [`env`]: the gap-crossing MDP (action decoding, observations, reward).
//! * [`ppo`]: a from-scratch PPO learner with tanh-squashed Gaussian MLP policy.
//! * [`eval`]: success rate, cost of transport, Froude number and body angular velocity.
//! * [`config`], [`trace`], [`plot`], [`cli`]: configuration, CSV traces, SVG output
//!   and the command-line surface.
//!
//! Limb index order everywhere is FR, FL, RR, RL.

pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod pattern;
pub mod physics;
pub mod plot;
pub mod ppo;
pub mod rhythm;
pub mod seed;
pub mod terrain;
pub mod trace;

pub use error::{Error, Result};

/// Number of legs (and oscillators).
pub const NUM_LEGS: usize = 4;
/// Number of actuated joints (hip + knee per leg).
pub const NUM_JOINTS: usize = 8;

/// Leg names in index order.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["FR", "FL", "RR", "RL"];
