//! Sparse-signal reconstruction toolkit built around a projected Nesterov
//! proximal-gradient (PNPG) solver with adaptive step size, restart, and
//! inexact inner proximal mappings.
//!
//! The crate is organized by role:
//! - [`operators`]: linear forward/adjoint pairs (dense matrices, wavelet
//!   dictionaries, a tomographic line projector, PET sensing composition)
//!   and spectral-norm estimation;
//! - [`models`]: convex differentiable data-fidelity terms (Poisson
//!   identity link, concentrated Poisson log link, Gaussian);
//! - [`prox`]: convex-set projections and the inexact proximal operators
//!   for l1-analysis (ADMM) and isotropic TV (dual gradient projection);
//! - [`solver`]: the PNPG iteration, its unconstrained variant, and a
//!   continuation wrapper;
//! - [`baselines`]: Auslender-Teboulle, generalized forward-backward, and
//!   primal-dual splitting reference solvers;
//! - [`experiment`]: phantom/signal generators, measurement simulation,
//!   sweep runner, and CSV/JSON export behind the command-line interface.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod models;
pub mod operators;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use models::NllModel;
pub use operators::{DenseVector, LinearOperator, OpRef};
pub use prox::{ConvexSet, Regularizer, SparsityPenalty, TvGrid};
pub use solver::{pnpg_solve, ContinuationConfig, SolverConfig, SolverRun, SolverTrace};
