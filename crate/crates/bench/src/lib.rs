//! Shared fixtures for the kernel benchmarks.

use sde_infer_core::fokker_planck_fd::FdGrid;
use sde_infer_core::prior::{coeff_from_rates, PriorConfig};
use sde_infer_core::simulate::{euler_maruyama, observe, ObservationSet};
use sde_infer_core::{BoundaryKind, CoefficientField};

/// The coefficients of the numerical experiment: U(x) = 1 - x^2,
/// D(x) = x/2, N = 100.
pub fn paper_coefficients() -> CoefficientField {
    coeff_from_rates(|x| 1.0 - x * x, 100, 0.5, 10.0, 1.0).expect("valid coefficients")
}

pub fn paper_prior() -> PriorConfig {
    PriorConfig::paper_regime()
}

/// A fixed synthetic dataset: 100 observations at spacing 0.1.
pub fn paper_observations() -> ObservationSet {
    let coeff = paper_coefficients();
    let path = euler_maruyama(&coeff, 0.1, 1e-3, 10.0, 2024).expect("simulation");
    let times: Vec<f64> = (1..=100).map(|i| i as f64 * 0.1).collect();
    observe(&path, &times).expect("observation").obs
}

pub fn likelihood_grid() -> FdGrid {
    FdGrid::new(256, 0.01, BoundaryKind::Reflecting, 0.5).expect("valid grid")
}
