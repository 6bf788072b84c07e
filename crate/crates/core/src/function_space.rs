//! Function-space vocabulary shared by every other module: the Fourier basis
//! of `L^2(0,1)`, finite Fourier series with Sobolev-scale norms, grid-based
//! Hölder norm estimates, and evaluable coefficient fields `(a, b)` with a
//! strictly positive diffusion floor.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use thiserror::Error;

/// Grid used for the ellipticity floor `m_a` of a coefficient field.
const ELLIPTICITY_GRID: usize = 512;
/// Grid used for the (quadratic-cost) Hölder estimate stored on a field.
const FIELD_HOLDER_GRID: usize = 128;
/// Default grid for the standalone Hölder norm estimator.
pub const DEFAULT_HOLDER_GRID: usize = 512;

#[derive(Debug, Error)]
pub enum FunctionSpaceError {
    #[error("sampled value is not finite at x = {x}")]
    NonFiniteSample { x: f64 },
    #[error("argument {x} outside the domain [0,1]")]
    Domain { x: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("diffusion coefficient is not uniformly elliptic (grid minimum {min})")]
    NonElliptic { min: f64 },
}

/// Value of the k-th orthonormal Fourier basis function on `[0,1]`.
///
/// `f_0 = 1`; for m >= 1 the pair `f_{2m-1} = sqrt(2) cos(2 m pi x)`,
/// `f_{2m} = sqrt(2) sin(2 m pi x)`.
pub fn fourier_basis_value(k: usize, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let m = ((k + 1) / 2) as f64;
    let phase = 2.0 * m * PI * x;
    if k % 2 == 1 {
        SQRT_2 * phase.cos()
    } else {
        SQRT_2 * phase.sin()
    }
}

/// A finite linear combination of Fourier basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFunction {
    coeffs: Vec<f64>,
}

impl SeriesFunction {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Exact finite sum `sum_k c_k f_k(x)`.
    ///
    /// Uses the angle-addition recurrence so a length-K series costs two
    /// trigonometric evaluations instead of K.
    pub fn eval(&self, x: f64) -> f64 {
        let c = &self.coeffs;
        if c.is_empty() {
            return 0.0;
        }
        let mut sum = c[0];
        if c.len() == 1 {
            return sum;
        }
        let phase = 2.0 * PI * x;
        let (s1, c1) = phase.sin_cos();
        let (mut sm, mut cm) = (s1, c1);
        let mut j = 1;
        while j < c.len() {
            sum += SQRT_2 * c[j] * cm;
            if j + 1 < c.len() {
                sum += SQRT_2 * c[j + 1] * sm;
            }
            j += 2;
            let next_c = cm * c1 - sm * s1;
            let next_s = sm * c1 + cm * s1;
            cm = next_c;
            sm = next_s;
        }
        sum
    }

    /// Domain-checked evaluation on `[0,1]`.
    pub fn eval_checked(&self, x: f64) -> Result<f64, FunctionSpaceError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FunctionSpaceError::Domain { x });
        }
        Ok(self.eval(x))
    }

    /// Sobolev norm on the Hilbert scale: `(sum_k w_k c_k^2)^{1/2}` with
    /// `w_k = k^{2l}` for `k >= 1`.
    ///
    /// The `k = 0` weight is taken as 1 rather than 0 so the result is a
    /// genuine norm: the index-weighted sum alone annihilates the constant
    /// mode for `l > 0` and diagnostics need definiteness.
    pub fn sobolev_norm(&self, l: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = if k == 0 { 1.0 } else { (k as f64).powf(2.0 * l) };
                w * c * c
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Free-function form of the series evaluation with the domain check.
pub fn eval_series(f: &SeriesFunction, x: f64) -> Result<f64, FunctionSpaceError> {
    f.eval_checked(x)
}

/// Grid estimate of the Hölder norm `||f||_{0,alpha}`: the grid sup-norm plus
/// the maximum difference quotient `|f(x)-f(xi)| / |x-xi|^alpha` over all grid
/// pairs. A lower bound of the true norm, nondecreasing under grid refinement.
pub fn holder_norm_estimate<F: Fn(f64) -> f64>(
    f: F,
    alpha: f64,
    grid_n: usize,
) -> Result<f64, FunctionSpaceError> {
    if grid_n < 2 {
        return Err(FunctionSpaceError::InvalidArgument(format!(
            "holder estimate needs grid_n >= 2, got {grid_n}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(FunctionSpaceError::InvalidArgument(format!(
            "holder exponent must lie in (0,1], got {alpha}"
        )));
    }
    let h = 1.0 / (grid_n - 1) as f64;
    let mut values = Vec::with_capacity(grid_n);
    for i in 0..grid_n {
        let x = i as f64 * h;
        let v = f(x);
        if !v.is_finite() {
            return Err(FunctionSpaceError::NonFiniteSample { x });
        }
        values.push(v);
    }
    let sup = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut quot = 0.0_f64;
    for i in 0..grid_n {
        for j in (i + 1)..grid_n {
            let dx = (j - i) as f64 * h;
            let q = (values[j] - values[i]).abs() / dx.powf(alpha);
            quot = quot.max(q);
        }
    }
    Ok(sup + quot)
}

type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// An evaluable coefficient pair `(a, b)` on `[0,1] x [0,T]` with an
/// ellipticity floor and a Hölder-norm estimate.
///
/// Evaluation is pure: repeated calls with equal arguments return
/// bit-identical values. The floor `m_a` and the Hölder estimate are grid
/// estimates fixed at construction.
#[derive(Clone)]
pub struct CoefficientField {
    a: SpaceTimeFn,
    b: SpaceTimeFn,
    m_a: f64,
    holder_alpha: f64,
    holder_norm_estimate: f64,
    horizon: f64,
    time_dependent: bool,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("m_a", &self.m_a)
            .field("holder_alpha", &self.holder_alpha)
            .field("holder_norm_estimate", &self.holder_norm_estimate)
            .field("horizon", &self.horizon)
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

impl CoefficientField {
    /// Field backed by time-independent closures. The ellipticity floor is
    /// the minimum of `a` over a 512-node grid; construction fails if it is
    /// not strictly positive.
    pub fn from_spatial<A, B>(
        a: A,
        b: B,
        horizon: f64,
        holder_alpha: f64,
    ) -> Result<Self, FunctionSpaceError>
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(horizon > 0.0) {
            return Err(FunctionSpaceError::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let m_a = grid_min(&a, ELLIPTICITY_GRID)?;
        if !(m_a > 0.0) {
            return Err(FunctionSpaceError::NonElliptic { min: m_a });
        }
        let norm_a = holder_norm_estimate(&a, holder_alpha, FIELD_HOLDER_GRID)?;
        let norm_b = holder_norm_estimate(&b, holder_alpha, FIELD_HOLDER_GRID)?;
        Ok(Self {
            a: Arc::new(move |x, _t| a(x)),
            b: Arc::new(move |x, _t| b(x)),
            m_a,
            holder_alpha,
            holder_norm_estimate: norm_a + norm_b,
            horizon,
            time_dependent: false,
        })
    }

    /// Constant-coefficient field.
    pub fn constant(a: f64, b: f64, horizon: f64) -> Result<Self, FunctionSpaceError> {
        Self::from_spatial(move |_| a, move |_| b, horizon, 1.0)
    }

    /// Field with genuine `(x, t)` dependence. The floor and Hölder estimate
    /// are taken over a coarse space-time grid.
    pub fn from_space_time<A, B>(
        a: A,
        b: B,
        horizon: f64,
        holder_alpha: f64,
    ) -> Result<Self, FunctionSpaceError>
    where
        A: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(horizon > 0.0) {
            return Err(FunctionSpaceError::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let mut m_a = f64::INFINITY;
        let mut norm = 0.0_f64;
        let nt = 16;
        for k in 0..=nt {
            let t = horizon * k as f64 / nt as f64;
            let at = |x: f64| a(x, t);
            let bt = |x: f64| b(x, t);
            m_a = m_a.min(grid_min(&at, ELLIPTICITY_GRID)?);
            let slice = holder_norm_estimate(&at, holder_alpha, FIELD_HOLDER_GRID)?
                + holder_norm_estimate(&bt, holder_alpha, FIELD_HOLDER_GRID)?;
            norm = norm.max(slice);
        }
        if !(m_a > 0.0) {
            return Err(FunctionSpaceError::NonElliptic { min: m_a });
        }
        Ok(Self {
            a: Arc::new(a),
            b: Arc::new(b),
            m_a,
            holder_alpha,
            holder_norm_estimate: norm,
            horizon,
            time_dependent: true,
        })
    }

    pub fn a(&self, x: f64, t: f64) -> f64 {
        (self.a)(x, t)
    }

    pub fn b(&self, x: f64, t: f64) -> f64 {
        (self.b)(x, t)
    }

    /// Ellipticity floor: the grid infimum of `a`.
    pub fn m_a(&self) -> f64 {
        self.m_a
    }

    pub fn holder_alpha(&self) -> f64 {
        self.holder_alpha
    }

    /// Grid estimate of `||a||_{0,alpha} + ||b||_{0,alpha}`.
    pub fn holder_norm_estimate(&self) -> f64 {
        self.holder_norm_estimate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }
}

fn grid_min<F: Fn(f64) -> f64>(f: &F, n: usize) -> Result<f64, FunctionSpaceError> {
    let mut m = f64::INFINITY;
    for i in 0..n {
        let x = i as f64 / (n - 1) as f64;
        let v = f(x);
        if !v.is_finite() {
            return Err(FunctionSpaceError::NonFiniteSample { x });
        }
        m = m.min(v);
    }
    Ok(m)
}
