//! Distributed subgradient method driven by inexact first-order oracles over
//! time-varying graphs, with the diagnostics and reference solvers needed to
//! check its consensus and suboptimality guarantees on concrete runs.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod reference;
pub mod rng;

pub use error::{Assumption, Error, Result};
