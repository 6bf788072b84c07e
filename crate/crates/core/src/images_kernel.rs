//! Constant-coefficient heat kernels on `[0,1]` built by the method of images.
//!
//! With the diffusion frozen at `a = a(xi, tau)`, the kernel is the signed sum
//! of whole-line Gaussians of variance `2 a (t - tau)` over the reflected
//! source points `y_n = xi + 2n` and `z_n = -xi + 2n`:
//! Dirichlet subtracts the `z_n` images (absorption), Neumann adds them
//! (reflection). First and second x-derivatives are obtained by
//! differentiating each Gaussian term, not by finite differences, since they
//! feed the parametrix kernel where FD noise would compound.

use thiserror::Error;

/// Smallest admissible `t - tau`. Below this the kernel is numerically a
/// delta; producing that limit is the caller's job.
pub const MIN_GAP: f64 = 1e-12;

/// Hard cap on the image band index |n|.
pub const MAX_BANDS: usize = 64;

/// Default relative tail tolerance for the image sum.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("temporal order violated: need t - tau >= {MIN_GAP}, got t = {t}, tau = {tau}")]
    TemporalOrder { t: f64, tau: f64 },
    #[error("non-finite kernel value (a_frozen = {a_frozen}, t - tau = {gap})")]
    Overflow { a_frozen: f64, gap: f64 },
    #[error("boundary conditions differ between the two kernels")]
    BoundaryMismatch,
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),
}

/// Boundary condition imposed by the image signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Absorbing: the kernel vanishes at x = 0 and x = 1.
    Dirichlet,
    /// Reflecting: the x-derivative vanishes at x = 0 and x = 1.
    Neumann,
}

/// Which x-derivative of the kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOrder {
    Zero,
    One,
    Two,
}

/// A frozen-coefficient images kernel.
#[derive(Debug, Clone, Copy)]
pub struct ImagesKernelSpec {
    bc: BoundaryCondition,
    a_frozen: f64,
    truncation_eps: f64,
}

impl ImagesKernelSpec {
    pub fn new(bc: BoundaryCondition, a_frozen: f64) -> Result<Self, KernelError> {
        Self::with_truncation(bc, a_frozen, DEFAULT_TRUNCATION_EPS)
    }

    pub fn with_truncation(
        bc: BoundaryCondition,
        a_frozen: f64,
        truncation_eps: f64,
    ) -> Result<Self, KernelError> {
        if !(a_frozen > 0.0 && a_frozen.is_finite()) {
            return Err(KernelError::InvalidSpec(format!(
                "a_frozen must be positive and finite, got {a_frozen}"
            )));
        }
        if !(truncation_eps > 0.0 && truncation_eps < 1.0) {
            return Err(KernelError::InvalidSpec(format!(
                "truncation_eps must lie in (0,1), got {truncation_eps}"
            )));
        }
        Ok(Self {
            bc,
            a_frozen,
            truncation_eps,
        })
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn a_frozen(&self) -> f64 {
        self.a_frozen
    }

    /// Kernel value or x-derivative at `(x, t; xi, tau)`.
    pub fn images_density(
        &self,
        x: f64,
        t: f64,
        xi: f64,
        tau: f64,
        order: DerivOrder,
    ) -> Result<f64, KernelError> {
        let all = self.images_density_all(x, t, xi, tau)?;
        Ok(match order {
            DerivOrder::Zero => all[0],
            DerivOrder::One => all[1],
            DerivOrder::Two => all[2],
        })
    }

    /// Kernel value together with its first two x-derivatives, sharing one
    /// pass over the image bands.
    pub fn images_density_all(
        &self,
        x: f64,
        t: f64,
        xi: f64,
        tau: f64,
    ) -> Result<[f64; 3], KernelError> {
        let gap = t - tau;
        if !(gap >= MIN_GAP) {
            return Err(KernelError::TemporalOrder { t, tau });
        }
        let variance = 2.0 * self.a_frozen * gap;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * variance).sqrt();
        let inv_var = 1.0 / variance;
        let z_sign = match self.bc {
            BoundaryCondition::Dirichlet => -1.0,
            BoundaryCondition::Neumann => 1.0,
        };

        // Gaussian term and its two derivatives at signed distance d.
        let term = |d: f64| -> [f64; 3] {
            let g = norm * (-0.5 * d * d * inv_var).exp();
            [g, -d * inv_var * g, (d * d * inv_var - 1.0) * inv_var * g]
        };

        let u = x - xi;
        let v = x + xi;
        let mut sums = [0.0_f64; 3];
        let mut abs = [0.0_f64; 3];
        for n in 0..=MAX_BANDS {
            let shift = 2.0 * n as f64;
            let mut band = [0.0_f64; 3];
            let mut band_abs = [0.0_f64; 3];
            let mut add = |w: [f64; 3], sign: f64| {
                for o in 0..3 {
                    band[o] += sign * w[o];
                    band_abs[o] += w[o].abs();
                }
            };
            if n == 0 {
                add(term(u), 1.0);
                add(term(v), z_sign);
            } else {
                add(term(u - shift), 1.0);
                add(term(u + shift), 1.0);
                add(term(v - shift), z_sign);
                add(term(v + shift), z_sign);
            }
            let mut done = n >= 1;
            for o in 0..3 {
                sums[o] += band[o];
                abs[o] += band_abs[o];
                if band_abs[o] > self.truncation_eps * abs[o] {
                    done = false;
                }
            }
            if done {
                break;
            }
        }

        // Images cancel pairwise at the absorbing boundary; make the exact
        // value exact instead of leaving truncation residue.
        if self.bc == BoundaryCondition::Dirichlet && (x == 0.0 || x == 1.0) {
            sums[0] = 0.0;
        }

        if sums.iter().any(|s| !s.is_finite()) {
            return Err(KernelError::Overflow {
                a_frozen: self.a_frozen,
                gap,
            });
        }
        Ok(sums)
    }
}

/// `|Z^a - Z^{a'}|` at a point: the diagnostic behind the Lipschitz-in-`a`
/// property tests. Both specs must impose the same boundary condition.
pub fn images_lipschitz_gap(
    spec_a: &ImagesKernelSpec,
    spec_a_prime: &ImagesKernelSpec,
    x: f64,
    t: f64,
    xi: f64,
    tau: f64,
) -> Result<f64, KernelError> {
    if spec_a.bc != spec_a_prime.bc {
        return Err(KernelError::BoundaryMismatch);
    }
    let za = spec_a.images_density(x, t, xi, tau, DerivOrder::Zero)?;
    let zb = spec_a_prime.images_density(x, t, xi, tau, DerivOrder::Zero)?;
    Ok((za - zb).abs())
}
