//! Chang–Cooper finite-difference solver for the forward Kolmogorov equation
//!
//! `dp/dt = (1/2) d^2(a p)/dx^2 - d(b p)/dx`
//!
//! on `[0,1]` with reflecting (zero-flux) or absorbing (Dirichlet) walls, and
//! the observation log-likelihood built on its transition densities.
//!
//! The equation is rewritten in flux form `dp/dt = -dJ/dx` with
//! `J = b_eff p - D dp/dx`, effective drift `b_eff = b - a'/2` (centered
//! differences of `a` on the grid) and diffusion `D = a/2`, so the scheme is
//! exactly conservative: interface values use the Chang–Cooper exponential
//! weight `delta(w) = 1/w - 1/(e^w - 1)` at local Péclet number
//! `w = b_eff dx / D`, which upwinds smoothly and keeps the rate matrix an
//! M-matrix (nonnegative densities under implicit Euler).

use rayon::prelude::*;
use thiserror::Error;

use crate::function_space::CoefficientField;
use crate::simulate::ObservationSet;

/// Densities below this floor make an observation impossible at working
/// precision; the log-likelihood returns the -inf sentinel instead of a NaN.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("tridiagonal system is singular at row {row}")]
    Singular { row: usize },
    #[error("non-finite interface coefficient near x = {x}")]
    NonFiniteCoefficient { x: f64 },
    #[error("solver configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
}

/// Boundary behaviour of the density evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Zero flux through both walls; mass is conserved.
    Reflecting,
    /// Zero ghost density outside both walls; mass is nonincreasing.
    Absorbing,
}

/// Uniform cell-centered grid and time-stepping parameters.
#[derive(Debug, Clone, Copy)]
pub struct FdGrid {
    pub cells: usize,
    /// Upper bound on the step size used when evolving over a time interval.
    pub dt: f64,
    pub bc: BoundaryKind,
    /// Implicitness weight: 0.5 is Crank–Nicolson, 1.0 is implicit Euler.
    pub theta: f64,
}

impl FdGrid {
    pub fn new(cells: usize, dt: f64, bc: BoundaryKind, theta: f64) -> Result<Self, SolverError> {
        if cells < 32 {
            return Err(SolverError::Config(format!(
                "need at least 32 cells, got {cells}"
            )));
        }
        if !(dt > 0.0) {
            return Err(SolverError::Config(format!("dt must be positive, got {dt}")));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(SolverError::Config(format!(
                "theta must lie in [0.5, 1], got {theta}"
            )));
        }
        Ok(Self {
            cells,
            dt,
            bc,
            theta,
        })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Center of the cell that receives the discrete delta for source `xi`.
    pub fn delta_cell_center(&self, xi: f64) -> f64 {
        let i = delta_cell_index(self.cells, xi);
        (i as f64 + 0.5) * self.dx()
    }
}

fn delta_cell_index(cells: usize, xi: f64) -> usize {
    ((xi * cells as f64).floor() as usize).min(cells - 1)
}

/// A discretized density profile at cell centers (units 1/length).
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub values: Vec<f64>,
    pub time: f64,
    pub bc: BoundaryKind,
}

impl DensityGrid {
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// Total mass `sum p_i dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    /// First moment `sum x_i p_i dx`.
    pub fn mean(&self) -> f64 {
        let dx = self.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64 + 0.5) * dx * p)
            .sum::<f64>()
            * dx
    }

    /// Density at `x`: linear interpolation between the two bracketing cell
    /// centers, constant extrapolation in the half-cells at the ends.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.values.len();
        let u = x / self.dx() - 0.5;
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = u.floor() as usize;
        let frac = u - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// CSV snapshot with an `x,p` header and 17-significant-digit values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{:.16e},{:.16e}\n", self.cell_center(i), v));
        }
        out
    }
}

/// Chang–Cooper interface weight `1/w - 1/(e^w - 1)`.
fn chang_cooper_delta(w: f64) -> f64 {
    if w.abs() < 1e-8 {
        // Taylor expansion around w = 0
        0.5 - w / 12.0 + w * w * w / 720.0
    } else {
        1.0 / w - 1.0 / w.exp_m1()
    }
}

/// The tridiagonal rate operator `A` with `dp/dt = A p`.
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    max_a: f64,
}

/// Precomputed Thomas factorization of `I - theta dt A`.
struct ThomasFactor {
    sup: Vec<f64>,
    mult: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ThomasFactor {
    fn new(op: &Operator, theta: f64, dt: f64) -> Result<Self, SolverError> {
        let n = op.diag.len();
        let sup: Vec<f64> = op.upper.iter().map(|v| -theta * dt * v).collect();
        let mut mult = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut pivot = 1.0 - theta * dt * op.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(SolverError::Singular { row: 0 });
        }
        inv_pivot[0] = 1.0 / pivot;
        for i in 1..n {
            mult[i] = -theta * dt * op.lower[i] * inv_pivot[i - 1];
            pivot = 1.0 - theta * dt * op.diag[i] - mult[i] * sup[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(SolverError::Singular { row: i });
            }
            inv_pivot[i] = 1.0 / pivot;
        }
        Ok(Self {
            sup,
            mult,
            inv_pivot,
        })
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.mult[i] * rhs[i - 1];
        }
        rhs[n - 1] *= self.inv_pivot[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.sup[i] * rhs[i + 1]) * self.inv_pivot[i];
        }
    }
}

/// One finite-difference solver instance. Immutable after construction and
/// safe to share across threads; each evolution owns its own workspace.
pub struct FdSolver {
    grid: FdGrid,
    coeff: CoefficientField,
    op: Operator,
}

impl FdSolver {
    pub fn new(coeff: &CoefficientField, grid: &FdGrid) -> Result<Self, SolverError> {
        FdGrid::new(grid.cells, grid.dt, grid.bc, grid.theta)?;
        let op = build_operator(coeff, grid, 0.0)?;
        Ok(Self {
            grid: *grid,
            coeff: coeff.clone(),
            op,
        })
    }

    pub fn grid(&self) -> &FdGrid {
        &self.grid
    }

    /// Discrete delta: unit mass in the cell containing `xi`, no
    /// mollification.
    pub fn delta(&self, xi: f64, time: f64) -> DensityGrid {
        let mut values = vec![0.0; self.grid.cells];
        values[delta_cell_index(self.grid.cells, xi)] = self.grid.cells as f64;
        DensityGrid {
            values,
            time,
            bc: self.grid.bc,
        }
    }

    /// One theta-weighted step of size `dt`.
    pub fn step_once(&self, p: &mut DensityGrid, dt: f64) -> Result<(), SolverError> {
        if !(dt > 0.0) {
            return Err(SolverError::Config(format!("dt must be positive, got {dt}")));
        }
        let rebuilt;
        let op = if self.coeff.is_time_dependent() {
            rebuilt = build_operator(&self.coeff, &self.grid, p.time + 0.5 * dt)?;
            &rebuilt
        } else {
            &self.op
        };
        let factor = ThomasFactor::new(op, self.grid.theta, dt)?;
        let mut scratch = vec![0.0; p.values.len()];
        self.apply_step(op, &factor, dt, p, &mut scratch)
    }

    /// Evolve over `duration`, selecting the number of steps from the step
    /// rule: `dt <= grid.dt`, `dt <= duration/50` and, for theta < 1,
    /// `dt <= 0.5 dx^2 N / (2 max a)`.
    pub fn evolve(&self, p: &mut DensityGrid, duration: f64) -> Result<(), SolverError> {
        if !(duration > 0.0) {
            return Err(SolverError::Input(format!(
                "evolution duration must be positive, got {duration}"
            )));
        }
        let dt = self.step_size(duration);
        let n_steps = (duration / dt).round().max(1.0) as usize;
        let dt = duration / n_steps as f64;
        if self.coeff.is_time_dependent() {
            for _ in 0..n_steps {
                self.step_once(p, dt)?;
            }
            return Ok(());
        }
        let factor = ThomasFactor::new(&self.op, self.grid.theta, dt)?;
        let mut scratch = vec![0.0; p.values.len()];
        for _ in 0..n_steps {
            self.apply_step(&self.op, &factor, dt, p, &mut scratch)?;
        }
        Ok(())
    }

    /// The per-transition step size implied by the step rule.
    pub fn step_size(&self, duration: f64) -> f64 {
        let mut dt = self.grid.dt.min(duration / 50.0);
        if self.grid.theta < 1.0 {
            let dx = self.grid.dx();
            let stab = 0.5 * dx * dx * self.grid.cells as f64 / (2.0 * self.op.max_a);
            dt = dt.min(stab);
        }
        let n_steps = (duration / dt).ceil().max(1.0);
        duration / n_steps
    }

    fn apply_step(
        &self,
        op: &Operator,
        factor: &ThomasFactor,
        dt: f64,
        p: &mut DensityGrid,
        scratch: &mut Vec<f64>,
    ) -> Result<(), SolverError> {
        let n = p.values.len();
        debug_assert_eq!(n, self.grid.cells);
        #[cfg(debug_assertions)]
        let mass_before = p.values.iter().sum::<f64>();

        let w = (1.0 - self.grid.theta) * dt;
        let old = &p.values;
        scratch.resize(n, 0.0);
        scratch[0] = old[0] + w * (op.diag[0] * old[0] + op.upper[0] * old[1]);
        for i in 1..n - 1 {
            scratch[i] = old[i]
                + w * (op.lower[i] * old[i - 1] + op.diag[i] * old[i] + op.upper[i] * old[i + 1]);
        }
        scratch[n - 1] = old[n - 1] + w * (op.lower[n - 1] * old[n - 2] + op.diag[n - 1] * old[n - 1]);
        factor.solve_in_place(scratch);
        std::mem::swap(&mut p.values, scratch);
        p.time += dt;

        #[cfg(debug_assertions)]
        if self.grid.bc == BoundaryKind::Reflecting {
            let mass_after = p.values.iter().sum::<f64>();
            let scale = mass_before.abs().max(1.0);
            debug_assert!(
                (mass_after - mass_before).abs() <= 1e-12 * scale,
                "reflecting mass drift {} in one step",
                (mass_after - mass_before).abs() / scale
            );
        }
        Ok(())
    }
}

fn build_operator(
    coeff: &CoefficientField,
    grid: &FdGrid,
    t: f64,
) -> Result<Operator, SolverError> {
    let n = grid.cells;
    let dx = grid.dx();
    // interface samples at x_j = j dx, j = 0..=n
    let mut a_if = vec![0.0; n + 1];
    let mut b_if = vec![0.0; n + 1];
    for j in 0..=n {
        let x = j as f64 * dx;
        a_if[j] = coeff.a(x, t);
        b_if[j] = coeff.b(x, t);
        if !a_if[j].is_finite() || !b_if[j].is_finite() {
            return Err(SolverError::NonFiniteCoefficient { x });
        }
    }
    let max_a = a_if.iter().fold(0.0_f64, |m, v| m.max(*v));

    // Flux J_j = left_j p_{j-1} + right_j p_j at interface j.
    let mut left = vec![0.0; n + 1];
    let mut right = vec![0.0; n + 1];
    for j in 0..=n {
        let da = if j == 0 {
            (a_if[1] - a_if[0]) / dx
        } else if j == n {
            (a_if[n] - a_if[n - 1]) / dx
        } else {
            (a_if[j + 1] - a_if[j - 1]) / (2.0 * dx)
        };
        let b_eff = b_if[j] - 0.5 * da;
        let diff = 0.5 * a_if[j];
        let w = b_eff * dx / diff;
        if !w.is_finite() {
            return Err(SolverError::NonFiniteCoefficient { x: j as f64 * dx });
        }
        let delta = chang_cooper_delta(w);
        left[j] = b_eff * (1.0 - delta) + diff / dx;
        right[j] = b_eff * delta - diff / dx;
    }

    let inv_dx = 1.0 / dx;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        // dp_i/dt = (J_i - J_{i+1}) / dx, with boundary fluxes dropped for
        // reflecting walls and ghost densities zeroed for absorbing walls.
        let mut d = 0.0;
        if i > 0 {
            lower[i] = left[i] * inv_dx;
            d += right[i] * inv_dx;
        } else if grid.bc == BoundaryKind::Absorbing {
            d += right[0] * inv_dx;
        }
        if i + 1 < n {
            upper[i] = -right[i + 1] * inv_dx;
            d -= left[i + 1] * inv_dx;
        } else if grid.bc == BoundaryKind::Absorbing {
            d -= left[n] * inv_dx;
        }
        diag[i] = d;
    }
    Ok(Operator {
        lower,
        diag,
        upper,
        max_a,
    })
}

/// One theta-weighted Chang–Cooper step of size `grid.dt`.
pub fn step(
    coeff: &CoefficientField,
    grid: &FdGrid,
    p: &DensityGrid,
) -> Result<DensityGrid, SolverError> {
    if p.time + grid.dt > coeff.horizon() + 1e-12 {
        return Err(SolverError::Input(format!(
            "step past the horizon: time {} + dt {} > T {}",
            p.time,
            grid.dt,
            coeff.horizon()
        )));
    }
    let solver = FdSolver::new(coeff, grid)?;
    let mut out = p.clone();
    solver.step_once(&mut out, grid.dt)?;
    Ok(out)
}

/// Transition density `p(., t; xi, tau)`: a discrete delta at `xi` evolved to
/// time `t`.
pub fn transition_density(
    coeff: &CoefficientField,
    grid: &FdGrid,
    xi: f64,
    tau: f64,
    t: f64,
) -> Result<DensityGrid, SolverError> {
    check_window(coeff, tau, t)?;
    let solver = FdSolver::new(coeff, grid)?;
    let mut p = solver.delta(xi, tau);
    solver.evolve(&mut p, t - tau)?;
    Ok(p)
}

fn check_window(coeff: &CoefficientField, tau: f64, t: f64) -> Result<(), SolverError> {
    if !(tau >= 0.0 && t > tau && t <= coeff.horizon() + 1e-12) {
        return Err(SolverError::Input(format!(
            "need 0 <= tau < t <= T = {}, got tau = {tau}, t = {t}",
            coeff.horizon()
        )));
    }
    Ok(())
}

/// Log-likelihood of an observation sequence:
/// `sum_i log p(y_{i+1}, s_{i+1}; y_i, s_i)` with the density linearly
/// interpolated at each observation. Returns `-inf` (a rejection signal, not
/// an error) as soon as any interpolated density falls below
/// [`DENSITY_FLOOR`]. The transitions are independent solves and are
/// evaluated concurrently.
pub fn log_likelihood(
    coeff: &CoefficientField,
    grid: &FdGrid,
    obs: &ObservationSet,
) -> Result<f64, SolverError> {
    obs.validate()
        .map_err(|e| SolverError::Input(e.to_string()))?;
    if obs.len() <= 1 {
        return Ok(0.0);
    }
    if *obs.times().last().unwrap() > coeff.horizon() + 1e-12 {
        return Err(SolverError::Input(format!(
            "observation time {} past horizon {}",
            obs.times().last().unwrap(),
            coeff.horizon()
        )));
    }
    let solver = FdSolver::new(coeff, grid)?;
    let terms: Vec<Result<f64, SolverError>> = (0..obs.len() - 1)
        .into_par_iter()
        .map(|i| {
            let (y0, s0) = (obs.values()[i], obs.times()[i]);
            let (y1, s1) = (obs.values()[i + 1], obs.times()[i + 1]);
            let mut p = solver.delta(y0, s0);
            solver.evolve(&mut p, s1 - s0)?;
            let density = p.interpolate(y1);
            if density <= DENSITY_FLOOR {
                Ok(f64::NEG_INFINITY)
            } else {
                Ok(density.ln())
            }
        })
        .collect();
    let mut total = 0.0;
    for term in terms {
        let v = term?;
        if v == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += v;
    }
    Ok(total)
}

/// Probability of not yet being absorbed: the remaining mass of the
/// transition density under absorbing walls. One minus it is the total
/// absorption probability (both boundaries combined).
pub fn survival_probability(
    coeff: &CoefficientField,
    grid: &FdGrid,
    xi: f64,
    tau: f64,
    t: f64,
) -> Result<f64, SolverError> {
    if grid.bc != BoundaryKind::Absorbing {
        return Err(SolverError::Config(
            "survival probability needs absorbing boundaries".into(),
        ));
    }
    Ok(transition_density(coeff, grid, xi, tau, t)?.mass())
}
