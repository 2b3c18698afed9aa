//! Fair ranking when protected-group membership is only known in probability.
//!
//! The main entry point is [`rankers::nresilient`]: solve a relaxed linear
//! program over fractional assignments, decompose the optimum into rankings and
//! combine them by dependent swap rounding. Baselines, noise generators, metrics
//! and an experiment harness live alongside.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decompose;
pub mod error;
pub mod experiment;
pub mod fairspec;
pub mod io;
pub mod lpsolve;
pub mod metrics;
pub mod noiselab;
pub mod rankers;
pub mod rng;
pub mod swapround;
pub mod types;

pub use error::{Error, Result};
pub use fairspec::LinearConstraint;
pub use types::{
    utility, ConvexCombination, FairnessSpec, FractionalAssignment, GammaMode, GroupSample,
    Instance, Ranking, SpecParams, Structure, UpperBounds,
};
