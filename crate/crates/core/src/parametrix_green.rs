//! Desk-scale parametrix construction of the Green function for
//! `dp/dt = a(x) d^2p/dx^2 + b(x) dp/dx` on `[0,1]`.
//!
//! The frozen-coefficient images kernel `Z` seeds the perturbation kernel
//!
//! `(LZ)_1(x,t;xi,tau) = (a(x,t) - a(xi,tau)) Zxx + b(x,t) Zx`,
//!
//! whose Volterra iterates sum to `Phi = sum_k (LZ)_k`; the Green function is
//! `G = Z + int int Z Phi`. Time integrals use midpoint nodes
//! `sigma_j = tau + (j - 1/2) dsigma`, which never touch the integrable
//! endpoint singularities; space integrals use trapezoidal product
//! quadrature. This module is a validation oracle — the likelihood never
//! routes through it.

use rayon::prelude::*;
use thiserror::Error;

use crate::function_space::CoefficientField;
use crate::images_kernel::{BoundaryCondition, ImagesKernelSpec, KernelError};

#[derive(Debug, Error)]
pub enum ParametrixError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("parametrix configuration error: {0}")]
    Config(String),
    #[error(
        "iterated kernels diverge: |LZ_{k}| = {norm_curr} exceeds |LZ_{prev}| = {norm_prev} twice in a row",
        prev = k - 1
    )]
    Divergence {
        k: usize,
        norm_prev: f64,
        norm_curr: f64,
    },
    #[error("input error: {0}")]
    Input(String),
}

/// Freeze point of the outer parametrix factor in the Green construction
/// `G = Z + int Z(x,t; y,sigma) Phi(y,sigma; xi,tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterFreeze {
    /// Freeze at the integration point `(y, sigma)` (the classical
    /// construction; matches the images kernel's own convention).
    InnerPoint,
    /// Freeze at the source `(xi, tau)`.
    SourcePoint,
}

#[derive(Debug, Clone, Copy)]
pub struct ParametrixConfig {
    pub bc: BoundaryCondition,
    pub space_nodes: usize,
    pub time_nodes: usize,
    /// Number of iterated kernels summed into Phi.
    pub series_order: usize,
    /// Bookkeeping exponent mu in (1 - alpha/2, 1); recorded for diagnostics.
    /// The midpoint quadrature never evaluates at the singular endpoints, so
    /// mu does not enter the computation.
    pub singularity_mu: f64,
    pub outer_freeze: OuterFreeze,
}

impl ParametrixConfig {
    /// Desk-scale default: one Green evaluation stays around a second.
    pub fn new(bc: BoundaryCondition) -> Self {
        Self {
            bc,
            space_nodes: 128,
            time_nodes: 64,
            series_order: 4,
            singularity_mu: 0.75,
            outer_freeze: OuterFreeze::InnerPoint,
        }
    }

    pub fn validate(&self) -> Result<(), ParametrixError> {
        if self.series_order < 1 {
            return Err(ParametrixError::Config("series order must be >= 1".into()));
        }
        if self.space_nodes < 16 {
            return Err(ParametrixError::Config(format!(
                "need at least 16 space nodes, got {}",
                self.space_nodes
            )));
        }
        if self.time_nodes < 8 {
            return Err(ParametrixError::Config(format!(
                "need at least 8 time nodes, got {}",
                self.time_nodes
            )));
        }
        if !(self.singularity_mu > 0.0 && self.singularity_mu < 1.0) {
            return Err(ParametrixError::Config(format!(
                "singularity exponent must lie in (0,1), got {}",
                self.singularity_mu
            )));
        }
        Ok(())
    }
}

/// Perturbation kernel
/// `(LZ)_1 = (a(x,t) - a(xi,tau)) Zxx^{a(xi,tau)} + b(x,t) Zx^{a(xi,tau)}`.
pub fn lz1(
    coeff: &CoefficientField,
    bc: BoundaryCondition,
    x: f64,
    t: f64,
    xi: f64,
    tau: f64,
) -> Result<f64, ParametrixError> {
    let a_frozen = coeff.a(xi, tau);
    let spec = ImagesKernelSpec::new(bc, a_frozen)?;
    let derivs = spec.images_density_all(x, t, xi, tau)?;
    Ok((coeff.a(x, t) - a_frozen) * derivs[2] + coeff.b(x, t) * derivs[1])
}

/// Precomputed parametrix data for one source `(xi, tau)` and endpoint `t`.
///
/// Construction evaluates the Volterra iteration on the space-time grid;
/// `phi` and `green` are then cheap pointwise evaluations reusable across
/// probe points.
pub struct ParametrixSolver {
    coeff: CoefficientField,
    cfg: ParametrixConfig,
    xi: f64,
    tau: f64,
    t: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    sigma: Vec<f64>,
    d_sigma: f64,
    /// sum of LZ_1..LZ_K on the grid, indexed [time][space]
    phi_full: Vec<Vec<f64>>,
    /// sum of LZ_1..LZ_{K-1} (the integrand producing the K-term pointwise sum)
    phi_partial: Vec<Vec<f64>>,
    /// grid max-norms of the iterated kernels
    norms: Vec<f64>,
}

impl ParametrixSolver {
    pub fn new(
        coeff: &CoefficientField,
        cfg: &ParametrixConfig,
        xi: f64,
        tau: f64,
        t: f64,
    ) -> Result<Self, ParametrixError> {
        cfg.validate()?;
        if coeff.is_time_dependent() {
            return Err(ParametrixError::Config(
                "the parametrix oracle supports time-independent coefficients only".into(),
            ));
        }
        if !(tau >= 0.0 && t > tau && t <= coeff.horizon() + 1e-12) {
            return Err(ParametrixError::Input(format!(
                "need 0 <= tau < t <= T, got tau = {tau}, t = {t}"
            )));
        }
        let s = cfg.space_nodes;
        let h = 1.0 / (s - 1) as f64;
        let nodes: Vec<f64> = (0..s).map(|i| i as f64 * h).collect();
        let weights: Vec<f64> = (0..s)
            .map(|i| if i == 0 || i == s - 1 { 0.5 * h } else { h })
            .collect();
        let nt = cfg.time_nodes;
        let d_sigma = (t - tau) / nt as f64;
        let sigma: Vec<f64> = (1..=nt).map(|j| tau + (j as f64 - 0.5) * d_sigma).collect();

        // LZ_1 from the source onto the grid.
        let m1: Vec<Vec<f64>> = sigma
            .iter()
            .map(|&sj| {
                nodes
                    .iter()
                    .map(|&y| lz1(coeff, cfg.bc, y, sj, xi, tau))
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()?;

        // Kernel table kappa[d][i][i'] = LZ_1(y_i, sigma_{l+d}; y_{i'}, sigma_l),
        // a function of the time difference only (coefficients are
        // time-independent).
        let a_vals: Vec<f64> = nodes.iter().map(|&y| coeff.a(y, 0.0)).collect();
        let b_vals: Vec<f64> = nodes.iter().map(|&y| coeff.b(y, 0.0)).collect();
        let specs: Vec<ImagesKernelSpec> = a_vals
            .iter()
            .map(|&a| ImagesKernelSpec::new(cfg.bc, a))
            .collect::<Result<_, _>>()?;
        let kappa: Vec<Vec<f64>> = (1..nt)
            .into_par_iter()
            .map(|d| {
                let gap = d as f64 * d_sigma;
                let mut table = vec![0.0; s * s];
                for (col, (&y_src, spec)) in nodes.iter().zip(&specs).enumerate() {
                    for (row, &y_dst) in nodes.iter().enumerate() {
                        let derivs = spec.images_density_all(y_dst, gap, y_src, 0.0)?;
                        table[row * s + col] =
                            (a_vals[row] - a_vals[col]) * derivs[2] + b_vals[row] * derivs[1];
                    }
                }
                Ok(table)
            })
            .collect::<Result<_, ParametrixError>>()?;

        let max_norm = |m: &[Vec<f64>]| {
            m.iter()
                .flat_map(|row| row.iter())
                .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        };

        let mut phi_full = m1.clone();
        let mut phi_partial = vec![vec![0.0; s]; nt];
        let mut norms = vec![max_norm(&m1)];
        let mut current = m1;
        let mut rising = 0usize;
        for k in 1..cfg.series_order {
            if k < cfg.series_order {
                for (j, row) in phi_partial.iter_mut().enumerate() {
                    for (i, v) in row.iter_mut().enumerate() {
                        *v += current[j][i];
                    }
                }
            }
            // Volterra step: next[j] = dsigma * sum_{l<j} kappa[j-l] (w . current[l]).
            // The midpoint nodes below sigma_j cover [tau, sigma_j - dsigma/2];
            // the topmost node takes weight 3/2 so the remaining half strip
            // under the (sigma_j - sigma')^{-mu} singularity is not dropped.
            let weighted: Vec<Vec<f64>> = current
                .iter()
                .map(|row| row.iter().zip(&weights).map(|(v, w)| v * w).collect())
                .collect();
            let next: Vec<Vec<f64>> = (0..nt)
                .into_par_iter()
                .map(|j| {
                    let mut acc = vec![0.0; s];
                    for l in 0..j {
                        let table = &kappa[j - l - 1];
                        let src = &weighted[l];
                        let time_w = if l + 1 == j { 1.5 } else { 1.0 };
                        for (row, acc_v) in acc.iter_mut().enumerate() {
                            let mut dot = 0.0;
                            let base = row * s;
                            for (col, src_v) in src.iter().enumerate() {
                                dot += table[base + col] * src_v;
                            }
                            *acc_v += time_w * dot;
                        }
                    }
                    acc.iter_mut().for_each(|v| *v *= d_sigma);
                    acc
                })
                .collect();

            let norm = max_norm(&next);
            let prev = *norms.last().unwrap();
            if norm > prev {
                rising += 1;
                if rising >= 2 {
                    return Err(ParametrixError::Divergence {
                        k: k + 1,
                        norm_prev: prev,
                        norm_curr: norm,
                    });
                }
            } else {
                rising = 0;
            }
            norms.push(norm);
            for (j, row) in phi_full.iter_mut().enumerate() {
                for (i, v) in row.iter_mut().enumerate() {
                    *v += next[j][i];
                }
            }
            current = next;
        }

        Ok(Self {
            coeff: coeff.clone(),
            cfg: *cfg,
            xi,
            tau,
            t,
            nodes,
            weights,
            sigma,
            d_sigma,
            phi_full,
            phi_partial,
            norms,
        })
    }

    /// Grid max-norms of the iterated kernels LZ_1, LZ_2, ...
    pub fn iterate_norms(&self) -> &[f64] {
        &self.norms
    }

    /// Truncated perturbation series `Phi(x, t; xi, tau)` at the endpoint.
    pub fn phi(&self, x: f64) -> Result<f64, ParametrixError> {
        let mut value = lz1(&self.coeff, self.cfg.bc, x, self.t, self.xi, self.tau)?;
        if self.cfg.series_order > 1 {
            for (j, &sj) in self.sigma.iter().enumerate() {
                let mut inner = 0.0;
                for (i, (&y, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
                    let k = lz1(&self.coeff, self.cfg.bc, x, self.t, y, sj)?;
                    inner += w * k * self.phi_partial[j][i];
                }
                value += self.d_sigma * inner;
            }
        }
        Ok(value)
    }

    /// Green function value `G(x, t; xi, tau)`.
    pub fn green(&self, x: f64) -> Result<f64, ParametrixError> {
        let a_src = self.coeff.a(self.xi, self.tau);
        let lead =
            ImagesKernelSpec::new(self.cfg.bc, a_src)?.images_density_all(x, self.t, self.xi, self.tau)?[0];
        let mut correction = 0.0;
        match self.cfg.outer_freeze {
            OuterFreeze::InnerPoint => {
                for (j, &sj) in self.sigma.iter().enumerate() {
                    let mut inner = 0.0;
                    for (i, (&y, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
                        let phi = self.phi_full[j][i];
                        if phi != 0.0 {
                            let z = ImagesKernelSpec::new(self.cfg.bc, self.coeff.a(y, sj))?
                                .images_density_all(x, self.t, y, sj)?[0];
                            inner += w * z * phi;
                        }
                    }
                    correction += self.d_sigma * inner;
                }
            }
            OuterFreeze::SourcePoint => {
                let spec = ImagesKernelSpec::new(self.cfg.bc, a_src)?;
                for (j, &sj) in self.sigma.iter().enumerate() {
                    let mut inner = 0.0;
                    for (i, (&y, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
                        let phi = self.phi_full[j][i];
                        if phi != 0.0 {
                            inner += w * spec.images_density_all(x, self.t, y, sj)?[0] * phi;
                        }
                    }
                    correction += self.d_sigma * inner;
                }
            }
        }
        Ok(lead + correction)
    }
}

/// Truncated Volterra series `Phi` at a point (builds a solver internally;
/// use [`ParametrixSolver`] directly to share the grid across probes).
pub fn phi_series(
    coeff: &CoefficientField,
    cfg: &ParametrixConfig,
    x: f64,
    t: f64,
    xi: f64,
    tau: f64,
) -> Result<f64, ParametrixError> {
    ParametrixSolver::new(coeff, cfg, xi, tau, t)?.phi(x)
}

/// Green function via the parametrix series at a point.
pub fn green_function(
    coeff: &CoefficientField,
    cfg: &ParametrixConfig,
    x: f64,
    t: f64,
    xi: f64,
    tau: f64,
) -> Result<f64, ParametrixError> {
    ParametrixSolver::new(coeff, cfg, xi, tau, t)?.green(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::images_kernel::DerivOrder;
    use approx::assert_abs_diff_eq;

    fn sine_coeff() -> CoefficientField {
        CoefficientField::from_spatial(
            |x| 1.0 + 0.1 * (2.0 * std::f64::consts::PI * x).sin(),
            |_| 0.0,
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn lz1_vanishes_for_constant_coefficients() {
        let coeff = CoefficientField::constant(1.3, 0.0, 1.0).unwrap();
        for &(x, xi, gap) in &[(0.2, 0.7, 0.05), (0.5, 0.5, 0.3), (0.9, 0.1, 0.01)] {
            let v = lz1(&coeff, BoundaryCondition::Neumann, x, gap, xi, 0.0).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn lz1_odd_derivative_cancels_at_center() {
        let coeff = CoefficientField::constant(1.0, 1.0, 1.0).unwrap();
        let v = lz1(&coeff, BoundaryCondition::Neumann, 0.5, 0.05, 0.5, 0.0).unwrap();
        assert!(v.abs() <= 1e-12, "lz1 at the symmetric diagonal = {v}");
    }

    /// Compose the coefficient difference with the analytic second
    /// derivative and cross-check against a fourth-order finite difference
    /// of Z in x.
    #[test]
    fn lz1_matches_finite_difference_oracle() {
        let coeff = CoefficientField::from_spatial(|x| 1.0 + 0.1 * x, |_| 0.0, 1.0, 1.0).unwrap();
        let (x, xi, gap) = (0.6, 0.5, 0.05);
        let got = lz1(&coeff, BoundaryCondition::Neumann, x, gap, xi, 0.0).unwrap();

        let spec = ImagesKernelSpec::new(BoundaryCondition::Neumann, coeff.a(xi, 0.0)).unwrap();
        let z = |y: f64| spec.images_density(y, gap, xi, 0.0, DerivOrder::Zero).unwrap();
        let h = 1e-3;
        let zxx = (-z(x + 2.0 * h) + 16.0 * z(x + h) - 30.0 * z(x) + 16.0 * z(x - h)
            - z(x - 2.0 * h))
            / (12.0 * h * h);
        let want = (coeff.a(x, 0.0) - coeff.a(xi, 0.0)) * zxx;
        assert_abs_diff_eq!(got, want, epsilon = 1e-6 * (1.0 + want.abs()));
    }

    #[test]
    fn phi_vanishes_for_constant_coefficients() {
        let coeff = CoefficientField::constant(0.8, 0.0, 1.0).unwrap();
        let mut cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
        cfg.space_nodes = 32;
        cfg.time_nodes = 16;
        let v = phi_series(&coeff, &cfg, 0.4, 0.1, 0.6, 0.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn single_term_series_is_lz1() {
        let coeff = sine_coeff();
        let mut cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
        cfg.series_order = 1;
        cfg.space_nodes = 32;
        cfg.time_nodes = 16;
        let phi = phi_series(&coeff, &cfg, 0.3, 0.1, 0.5, 0.0).unwrap();
        let direct = lz1(&coeff, BoundaryCondition::Neumann, 0.3, 0.1, 0.5, 0.0).unwrap();
        assert_eq!(phi, direct);
    }

    /// Geometric-type decay of the iterates: the K = 3 correction is much
    /// smaller than the K = 2 correction.
    #[test]
    fn series_increments_decay() {
        let coeff = sine_coeff();
        let mut phis = Vec::new();
        for k in 1..=3 {
            let mut cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
            cfg.series_order = k;
            let v = phi_series(&coeff, &cfg, 0.5, 0.1, 0.4, 0.0).unwrap();
            phis.push(v);
        }
        let inc21 = (phis[1] - phis[0]).abs();
        let inc32 = (phis[2] - phis[1]).abs();
        assert!(
            inc32 <= 0.2 * inc21,
            "series increments do not decay: {inc32} vs {inc21}"
        );
    }

    /// For constant coefficients the correction is identically zero and the
    /// Green function equals the images kernel bit-for-bit.
    #[test]
    fn green_equals_images_for_constant_coefficients() {
        let coeff = CoefficientField::constant(1.0, 0.0, 1.0).unwrap();
        for freeze in [OuterFreeze::InnerPoint, OuterFreeze::SourcePoint] {
            let mut cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
            cfg.space_nodes = 32;
            cfg.time_nodes = 16;
            cfg.outer_freeze = freeze;
            let g = green_function(&coeff, &cfg, 0.3, 0.1, 0.6, 0.0).unwrap();
            let z = ImagesKernelSpec::new(BoundaryCondition::Neumann, 1.0)
                .unwrap()
                .images_density(0.3, 0.1, 0.6, 0.0, DerivOrder::Zero)
                .unwrap();
            assert_eq!(g, z);
        }
    }

    #[test]
    fn dirichlet_green_vanishes_at_wall() {
        let coeff = sine_coeff();
        let mut cfg = ParametrixConfig::new(BoundaryCondition::Dirichlet);
        cfg.space_nodes = 48;
        cfg.time_nodes = 24;
        let g = green_function(&coeff, &cfg, 0.0, 0.1, 0.6, 0.0).unwrap();
        assert!(g.abs() <= 1e-10, "G(0) = {g}");
    }

    #[test]
    fn positivity_at_moderate_perturbation() {
        let coeff = CoefficientField::from_spatial(
            |x| 1.0 + 0.1 * (2.0 * std::f64::consts::PI * x).sin(),
            |_| 0.2,
            1.0,
            1.0,
        )
        .unwrap();
        let cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
        let solver = ParametrixSolver::new(&coeff, &cfg, 0.45, 0.0, 0.1).unwrap();
        for &x in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let g = solver.green(x).unwrap();
            assert!(g >= -1e-3, "G({x}) = {g}");
        }
    }

    #[test]
    fn config_validation() {
        let coeff = sine_coeff();
        let mut cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
        cfg.series_order = 0;
        assert!(matches!(
            green_function(&coeff, &cfg, 0.5, 0.1, 0.5, 0.0),
            Err(ParametrixError::Config(_))
        ));
        let cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
        assert!(matches!(
            green_function(&coeff, &cfg, 0.5, 0.0, 0.5, 0.1),
            Err(ParametrixError::Input(_))
        ));
    }

    #[test]
    fn rejects_time_dependent_fields() {
        let coeff =
            CoefficientField::from_space_time(|_, t| 1.0 + 0.1 * t, |_, _| 0.0, 1.0, 1.0).unwrap();
        let cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
        assert!(matches!(
            green_function(&coeff, &cfg, 0.5, 0.1, 0.5, 0.0),
            Err(ParametrixError::Config(_))
        ));
    }
}
