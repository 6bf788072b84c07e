//! Nonparametric Bayesian inference of the drift and diffusion coefficients of a
//! one-dimensional diffusion on `[0,1]` from discrete observations.
//!
//! The crate is organised around the transition probability density
//! `p(x,t; xi,tau)` of the SDE `dX = b dt + sqrt(a) dW` restricted to the unit
//! interval with reflecting or absorbing boundaries:
//!
//! * [`images_kernel`] — constant-coefficient heat kernels on `[0,1]` built by
//!   the method of images (the analytic oracle and the parametrix seed),
//! * [`parametrix_green`] — the parametrix series for variable coefficients
//!   (a slow, independent validation path),
//! * [`fokker_planck_fd`] — the production Chang–Cooper finite-difference
//!   solver for the forward Kolmogorov equation and the observation
//!   likelihood built on it,
//! * [`prior`] — a positivity-preserving random-series prior on the birth
//!   rate `U` of a density-dependent birth–death model and its pushforward to
//!   coefficient pairs `(a, b)`,
//! * [`inference`] — whitened pCN posterior sampling, conditional-mean and
//!   MAP estimators, and truncation diagnostics,
//! * [`simulate`] — Euler–Maruyama and Gillespie data generators,
//! * [`function_space`] — shared function-space vocabulary (Fourier series,
//!   Hölder/Sobolev norm estimates, coefficient fields).

pub mod fokker_planck_fd;
pub mod function_space;
pub mod images_kernel;
pub mod inference;
pub mod parametrix_green;
pub mod prior;
pub mod simulate;
pub(crate) mod special;

pub use fokker_planck_fd::{BoundaryKind, DensityGrid, FdGrid, FdSolver};
pub use function_space::{fourier_basis_value, CoefficientField, SeriesFunction};
pub use images_kernel::{BoundaryCondition, DerivOrder, ImagesKernelSpec};
pub use inference::{ChainConfig, PosteriorRun};
pub use parametrix_green::{ParametrixConfig, ParametrixSolver};
pub use prior::{PriorConfig, RateField, SeriesState};
pub use simulate::{BdSpec, JumpPath, ObservationSet, SamplePath};
