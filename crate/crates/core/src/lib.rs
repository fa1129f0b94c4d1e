//! Mutual-information regularized robust multi-agent reinforcement learning.
//!
//! The crate trains cooperative swarm policies on a rendezvous task with a
//! reward penalized by a CLUB estimate of the history/action mutual
//! information, and evaluates them against worst-case learned adversaries
//! that take over a subset of agents.

pub mod adversary;
pub mod club;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod marl;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod run;

pub use error::{Error, Result};
