//! Sampling the Bayesian-Lasso posterior through a Langevin diffusion with
//! non-smooth (l1) drift.
//!
//! The diffusion `dx = -[sgn(x) + A^T(Ax - y)] dt + dw` is ergodic with the
//! posterior of the Lasso regression problem as its invariant density. This
//! crate discretizes it with three schemes (semi-implicit `SIES`, explicit
//! `EES1`/`EES2`), estimates the endpoint mean by plain and multilevel
//! Monte Carlo with cost-optimal sample allocations, and runs
//! Metropolis-Hastings chains whose proposals are built from the same
//! scheme kernels.
//!
//! Modules follow the pipeline:
//!
//! * [`model`] — the regression problem, objective/posterior, problem
//!   generation, a proximal-gradient Lasso solver and KKT certificates.
//! * [`prox`] — soft thresholding and Yosida smoothing of the l1 norm.
//! * [`schemes`] — the three discretizations, level grids, coupled
//!   fine/coarse simulation.
//! * [`estimators`] — MC/MLMC means, error curves, cost planners.
//! * [`mcmc`] — Metropolis-Hastings with scheme-kernel or random-walk
//!   proposals, replication-based cost search.
//! * [`bangbang`] — exact 1-D transition density used as ground truth.
//! * [`rng`] — splittable substreams for reproducible parallel sampling.
//! * [`quad`] — adaptive quadrature backing the 1-D oracles.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar for the common case.
//!
//! ```
//! use mlmc_lasso::model::generate_problem;
//! use mlmc_lasso::schemes::{LevelGrid, SchemeKind};
//! use mlmc_lasso::estimators::mc_mean;
//!
//! let (inst, _x_true) = generate_problem::<f64>(10, 7, 42).unwrap();
//! let grid = LevelGrid::new(10.0, 5).unwrap();
//! let (mean, var) = mc_mean(SchemeKind::Sies, &inst, &grid, 100, 1).unwrap();
//! assert_eq!(mean.len(), 10);
//! assert!(var > 0.0);
//! ```

pub mod bangbang;
pub mod error;
pub mod estimators;
pub mod mcmc;
pub mod model;
pub mod prox;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod schemes;

pub use error::{Error, Result};
pub use scalar::Real;
pub use schemes::SchemeKind;

/// The benchmark problem at double precision.
pub type Problem64 = model::ProblemInstance<f64>;
/// Dyadic level grid at double precision.
pub type LevelGrid64 = schemes::LevelGrid<f64>;
/// Error curve at double precision.
pub type ErrorCurve64 = estimators::ErrorCurve<f64>;
/// MC plan at double precision.
pub type McPlan64 = estimators::McPlan<f64>;
/// MLMC plan at double precision.
pub type MlmcPlan64 = estimators::MlmcPlan<f64>;
/// Chain specification at double precision.
pub type ChainSpec64 = mcmc::ChainSpec<f64>;
