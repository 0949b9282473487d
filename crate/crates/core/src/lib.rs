//! reachlab: a deterministic desk-scale laboratory for studying terminal-cost
//! selection in latent world-model planning.
//!
//! The pieces: a two-room continuous navigation environment with a geodesic
//! oracle, a trajectory store with temporal pair sampling, a small dense-net
//! engine, an engineered latent world model whose raw distance buries the
//! task subspace, a family of terminal costs including a learned pairwise
//! reachability head, a CEM planner, and same-candidate selection audits.

pub mod audit;
pub mod config;
pub mod error;
pub mod metric;
pub mod pipeline;
pub mod planner;
pub mod nn;
pub mod rng;
pub mod trajstore;
pub mod tworoom;
pub mod worldmodel;

pub use error::{Error, Result};
