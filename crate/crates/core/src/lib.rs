//! Domain-generalisation model selection and capacity analysis.
//!
//! The crate is organised around the pieces needed to study how hypothesis
//! complexity governs generalisation to unseen domains:
//!
//! - [`environment`]: multi-domain datasets, synthetic shift generators, feature
//!   CSV and IDX ingestion, rotation, and splits.
//! - [`linear`]: one-vs-rest L2-regularised linear classifiers (hinge dual
//!   coordinate descent, logistic Newton) and the bounded ramp surrogate risk.
//! - [`mlp`]: 2-layer ReLU networks trained with checkpointing, including
//!   variance (VRex-style) and inter-domain mixup penalties.
//! - [`complexity`]: Rademacher complexity estimators for norm-bounded linear
//!   classes, spectral norms and the distance-from-initialisation capacity
//!   measure for 2-layer networks.
//! - [`bounds`]: average-case, excess-risk, Cantelli and worst-case bounds.
//! - [`selection`]: domain-wise and instance-wise cross-validation, held-out
//!   domain evaluation and C sweeps.
//! - [`harness`]: experiment configuration, orchestration and CSV output used by
//!   the `dg-select` binary.

pub mod bounds;
pub mod complexity;
pub mod environment;
pub mod error;
pub mod fmt;
pub mod harness;
pub mod linalg;
pub mod linear;
pub mod mlp;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
