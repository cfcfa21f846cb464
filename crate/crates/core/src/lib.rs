//! Bayesian inference for exponential random graph models (ERGMs) with
//! Gaussian variational approximations.
//!
//! An ERGM places an exponential-family likelihood on a binary network,
//! `p(y|θ) ∝ exp{θᵀs(y)}`, whose normalizing constant sums over all graphs
//! and is intractable beyond toy sizes. This crate provides the pieces
//! needed to do approximate Bayesian inference anyway:
//!
//! - [`graph`] / [`stats`]: network storage, sufficient statistics
//!   (edges, gwesp, gwd, nodematch) and incremental change statistics.
//! - [`sampler`]: tie/no-tie Metropolis-Hastings simulation of networks,
//!   plus an exact enumeration oracle for very small graphs.
//! - [`pseudo`]: maximum pseudolikelihood, MCMC maximum likelihood, and the
//!   adjusted pseudolikelihood (mode/curvature/magnitude corrected).
//! - [`ncvmp`]: nonconjugate variational message passing on the adjusted
//!   pseudolikelihood with mode-shifted Gauss-Hermite quadrature.
//! - [`svi`]: stochastic variational inference with reparameterized
//!   gradients, driven by fresh Monte Carlo simulation or by adaptive
//!   self-normalized importance sampling over a particle store.
//! - [`posterior`]: Laplace approximation and a single-chain exchange
//!   algorithm baseline, plus marginal KL diagnostics.
//! - [`modelsel`]: importance weighted lower bounds on the log marginal
//!   likelihood and Bayes factors.
//!
//! All randomness flows from explicit seeds through named streams
//! ([`rng::derive_rng`]); identical inputs give byte-identical results.

pub mod data;
pub mod error;
pub mod files;
pub mod graph;
pub mod modelsel;
pub mod ncvmp;
pub mod posterior;
pub mod pseudo;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod svi;
pub mod variational;

pub use error::{Error, Result};
pub use graph::{DyadSet, Network};
pub use pseudo::AdjustedPl;
pub use sampler::{SamplerConfig, StatSample};
pub use stats::{ModelSpec, StatVector, Term};
pub use svi::{ElboReference, ParticleStore};
pub use variational::{GaussianPrior, GaussianVariational};
