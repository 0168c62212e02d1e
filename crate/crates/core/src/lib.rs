//! MCMC structure learning for Gaussian graphical models, with the prior placed
//! on an unconstrained covariance that is mapped to a graph-respecting precision.
//!
//! The precision matrix of a graph `G` is obtained as `Q = PD_G(Σ)`, the unique
//! matrix with zeros off the extended edge set whose inverse agrees with `Σ`
//! on that set. Putting a prior on the unconstrained `Σ` instead of on `Q`
//! keeps every Metropolis-Hastings ratio free of graph-dependent normalizing
//! constants.
//!
//! Modules, bottom-up:
//!
//! * [`spd`]: dense symmetric positive-definite kernels.
//! * [`graphs`]: undirected graphs, graph priors and the single-edge proposal.
//! * [`pdcomp`]: PD-completion by the column-wise regression (Hastie) and
//!   iterative proportional scaling algorithms.
//! * [`dist`]: Wishart-family densities and samplers, Gaussian likelihood.
//! * [`sampler`]: the alternating graph / Σ-block Metropolis-Hastings chain.
//! * [`dataio`]: CSV input, variable selection, quantile normalization and
//!   the tabular writers.
//! * [`diagnostics`]: batch-means standard errors and goodness-of-fit helpers.

pub mod dataio;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod graphs;
pub mod pdcomp;
pub mod sampler;
pub mod spd;
pub mod tolerances;

pub use error::{Error, Result};
pub use graphs::{Graph, GraphPrior};
pub use pdcomp::{CompletionAlgorithm, CompletionResult, CompletionSettings};
pub use spd::{Cholesky, SymMatrix};
