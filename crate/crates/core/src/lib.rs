//! Reference-anchored self-play for traffic agents.
//!
//! The crate is organized as a file-mediated pipeline:
//!
//! - [`scenario`]: road graphs, logged tracks, infraction predicates, synthetic expert data.
//! - [`tokenizer`]: K-disk motion vocabulary shared by the policy and the reference model.
//! - [`sim`]: batched closed-loop simulation and observation building.
//! - [`nn`]: dense network kernel with exact gradients, categorical distributions, Adam.
//! - [`policy`]: late-fusion actor-critic, centralized reference model, behavior cloning.
//! - [`trainer`]: self-play PPO anchored to the reference by a forward KL penalty.
//! - [`metrics`]: histogram-likelihood realism scores, minADE and infraction rates.
//! - [`planners`]: IDM and Frenet rule-based planners and PDM-style scoring.
//! - [`harness`]: planner evaluation matrix, correlation statistics, throughput bench.
//! - [`cli`]: the `anchorplay` command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod planners;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
