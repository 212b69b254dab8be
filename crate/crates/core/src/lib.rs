//! A two-component factor mixture model for detecting aberrant survey
//! respondents.
//!
//! The model combines a confirmatory factor analysis (CFA) component with a
//! researcher-imposed zero pattern on the loadings, representing the
//! hypothesized latent structure of the instrument, and an exploratory factor
//! analysis (EFA) component with a fully free loading matrix that absorbs
//! response patterns which do not conform to that structure (faking, careless
//! responding). Component membership is governed by a per-respondent logistic
//! mixture weight that may depend on covariates.
//!
//! The crate provides:
//!
//! - density evaluation and posterior classification ([`model`]),
//! - maximum-likelihood estimation via multi-start EM with bootstrap
//!   standard errors ([`em`]),
//! - information/classification criteria and an entropy-conditioned model
//!   scan ([`selection`]),
//! - synthetic-data generators and replication studies for validating the
//!   classifier, including an SGR faking perturbation ([`sim`]),
//! - baseline single-component CFA fit indices and per-class correlation
//!   matrices ([`diagnostics`]),
//! - report emission in CSV/JSON ([`report`]).
//!
//! With the default `parallel` feature, per-observation work, EM starts,
//! bootstrap replicates, scan candidates, and study replications run on a
//! rayon thread pool capped by the `ABERRANT_MIX_THREADS` environment
//! variable. Disabling the feature yields a dependency-free sequential build
//! with bit-identical numeric results: parallel regions only fill
//! independent, index-addressed slots, and every reduction runs in a fixed
//! sequential order (see [`linalg::pairwise_sum`]).

pub mod diagnostics;
pub mod em;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod model;
pub mod report;
pub mod rng;
pub mod selection;
pub mod sim;

pub use error::{Error, Result};
