//! Learned multi-cue association for online tracking-by-detection.
//!
//! Pure algorithms only (`no_std` + `alloc`): the differentiable core, the
//! temporal and group-aware encoders, assignment, the tracker loop, training,
//! heuristic baselines, oracles, synthetic data and metrics. File formats and the
//! command line live in the companion `camel` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod association;
pub mod diffcore;
pub mod domain;
pub mod eval;
pub mod heuristics;
pub mod metrics;
pub mod model;
pub mod oracles;
pub mod synth;
pub mod tracker;
pub mod train;

#[cfg(test)]
mod testutil;
