//! Scenario model and day simulation for regulating an on-demand mobility market:
//! road network with cluster-level congestion, public transport, traveler mode choice,
//! a pooled fleet operator and the regulator's instruments.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand;
pub mod error;
pub mod evaluator;
pub mod fleet;
pub mod mode_choice;
pub mod network;
pub mod params;
pub mod policy;
pub mod scenario_io;
pub mod simulation;
pub mod store;
pub mod synth;
pub mod transit;

pub use error::{Error, Result};
