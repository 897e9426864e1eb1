//! Scaling-law analysis for neural language models.
//!
//! Fits the parametric loss surface `L(N, D) = E + A/N^α + B/D^β` and its
//! multi-epoch generalization to logged training runs, solves compute-optimal
//! allocation under `C = 6ND`, extracts loss-per-FLOP envelopes and fits
//! power laws to them, and compares downstream-metric scaling across
//! modalities (e.g. speech vs text language models).
//!
//! Modules:
//! - [`runstore`]: run records and learning curves, CSV/JSON ingestion.
//! - [`numopt`]: L-BFGS, Huber loss, gradient checking.
//! - [`lawfit`]: two-stage multistart Huber fits of the loss laws.
//! - [`alloc`]: closed-form compute-optimal allocation and inverse queries.
//! - [`scalecurves`]: Pareto envelopes and log-log power-law fits.
//! - [`linkage`]: loss/metric correlation, efficiency ratios, parity projection.
//! - [`synthgen`]: seeded synthetic runs and curves from known laws.
//! - [`artifact`]: the JSON law-artifact format shared with the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod artifact;
pub mod lawfit;
pub mod linkage;
pub mod numopt;
pub mod runstore;
pub mod scalecurves;
pub mod synthgen;

pub use alloc::{AllocationConstants, AllocationResult};
pub use lawfit::{ChinchillaParams, FitConfig, FitReport, MultiEpochParams};
pub use runstore::{CurvePoint, CurveSet, RunRecord, RunSet};
pub use scalecurves::PowerLawFit;
