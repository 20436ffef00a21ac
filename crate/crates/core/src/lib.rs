//! Empirical-Bayes distribution estimation from symbol counts.
//!
//! A Poisson-mixture prior is learned from the counts by nonparametric
//! maximum likelihood ([`solver`]), turned into a posterior-mean rule
//! ([`mixture::PosteriorRule`]) and normalized into probability estimates for
//! every symbol, seen or unseen ([`estimators`]). Good-Turing variants,
//! add-constant rules and ground-truth-aware oracles ([`oracles`]) are provided
//! as baselines, and [`eval`] carries the loss functions, synthetic
//! distributions and per-trial scoring used by benchmark harnesses.
//!
//! The crate is `no_std` and needs only `alloc`.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod counts;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod mixture;
mod nnls;
pub mod oracles;
pub mod solver;

pub use counts::{CountsVector, Profile};
pub use error::{Error, Result};
pub use estimators::{EstimatorSpec, NpmleParams, ProbabilityEstimate};
pub use eval::{Contender, OracleBaseline, SamplingMode, SyntheticDistribution, TrialScores};
pub use mixture::{MixingDistribution, PosteriorRule, PretrainedPrior};
pub use oracles::TrueDistribution;
pub use solver::{SolverConfig, SolverReport};
