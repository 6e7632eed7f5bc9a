//! Local exchange particle filters and their asymptotic variance.
//!
//! This crate implements two distributed resampling schemes for particle
//! filtering of hidden Markov models:
//!
//! * **LEPF** — the local exchange particle filter: `m` groups of `M`
//!   particles where each group's resampling pool is shifted by `theta`
//!   indices, so neighbouring groups trade `theta` particles per step.
//! * **IBPF** — `m` fully independent bootstrap particle filters of `M`
//!   particles each, the natural embarrassingly-parallel baseline.
//!
//! Both are instances of one generic interaction-matrix filter ([`engine`]),
//! driven by sparse doubly stochastic matrices built in [`interaction`].
//! The central-limit-theorem variance of either scheme can be computed
//! exactly: the variance is governed by the collision count of a pair of
//! backward index chains, whose law is worked out in [`collision`], and the
//! finite-state variance formula is evaluated by several independent routes
//! in [`variance`].
//!
//! Start with the runnable programs in `examples/` — one per capability —
//! or the `lepf` binary, which exposes `check-alpha`, `zlaw`, `variance`,
//! `simulate` and `selftest` subcommands.

pub mod cli;
pub mod collision;
pub mod engine;
pub mod hmm;
pub mod interaction;
pub(crate) mod numeric;
pub mod selftest;
pub mod variance;

/// Errors produced by model construction, filtering and the CLI layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("likelihood requested for step {requested} but only steps 0..={horizon} are stored")]
    HorizonExceeded { requested: usize, horizon: usize },
    #[error("filter normalizer underflow at step {step}: all probability mass annihilated")]
    NormalizerUnderflow { step: usize },
    #[error("invalid interaction scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
