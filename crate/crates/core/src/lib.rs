//! `collnorm`: instance-optimal estimation of the collision norm ‖μ‖₂² of an
//! unknown discrete distribution, from samples alone.
//!
//! The collision norm is the probability that two independent samples
//! coincide. This crate ships:
//!
//! - reference collision-rate estimators with different guarantees (negative
//!   moments, exact unbiasedness, both) and their L3 counterparts;
//! - advice finders that bound the hardness coefficient
//!   t = ‖μ‖₃³/‖μ‖₂⁴ − 1 in each norm regime, including the finite-domain /
//!   friendly-distribution reduction;
//! - the top-level unbiased estimator whose expected sample count adapts to
//!   the instance (≈ 1/(ε‖μ‖₂) + t/ε²) instead of the worst case;
//! - a lower-bound lab with hard-instance constructions and
//!   indistinguishability experiments;
//! - a deterministic experiment harness (seed derivation, worker pool,
//!   CSV/JSONL emission).
//!
//! Ground truth lives in [`dist::ExplicitDistribution`]; estimators only see
//! a [`oracle::Oracle`], which hands out labels and counts draws. Every
//! run is reproducible from a single `u64` seed (ChaCha8 streams, SplitMix64
//! per-trial derivation).

pub mod advice;
pub mod dist;
pub mod error;
pub mod finite;
pub mod harness;
pub mod lowerbound;
pub mod norm;
pub mod oracle;
pub mod primitives;
pub mod report;
pub mod toplevel;
pub mod zoo;

pub use dist::{tv_distance, ExplicitDistribution, Label};
pub use error::{Error, Result};
pub use oracle::{derive_seed, CollisionTally, Oracle, SampleOracle};
pub use report::{AdviceReport, EstimateReport, EstimatorParams, TraceEntry};
