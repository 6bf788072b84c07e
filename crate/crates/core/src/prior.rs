//! Random-series prior on the birth rate `U` and its pushforward to
//! coefficient pairs.
//!
//! A truncated Fourier series `f = sum_k gamma_k eta_k f_k` with iid
//! beta-exponential coefficients (density proportional to `exp(-|x|^beta)`,
//! tails thinner than Gaussian for `beta > 2`) is pushed through the link
//! `U = g(f) h` with `h(x) = 1 - e^{x-1}`, which makes `U` positive on
//! `[0,1)` and pins `U(1) = 0`. With the known linear recovery `D(x) =
//! gamma x` the SDE coefficients are `a = (U + D)/N` and `b = U - D`, which
//! are uniformly elliptic by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::function_space::{CoefficientField, FunctionSpaceError, SeriesFunction};
use crate::special;

/// Grid used for the ellipticity floor and `sup |f|` of a rate field.
const RATE_GRID: usize = 512;

/// Relative quantile root-finding tolerance on the tail-probability scale;
/// comfortably inside the 1e-12 CDF-scale contract.
const QUANTILE_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("invalid prior configuration: {0}")]
    Config(String),
    #[error("quantile argument must lie strictly inside (0,1), got {u}")]
    QuantileDomain { u: f64 },
    #[error("non-finite series coefficient at index {index}")]
    NonFiniteCoefficient { index: usize },
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error(transparent)]
    FunctionSpace(#[from] FunctionSpaceError),
}

/// Configuration of the beta-exponential series prior.
#[derive(Debug, Clone, Copy)]
pub struct PriorConfig {
    /// Tail exponent of the coefficient density, must exceed 2.
    pub beta: f64,
    /// Decay exponent of the weights `gamma_k = k^{-theta}`.
    pub theta: f64,
    /// Truncation: modes 0..=k_modes are retained (k_modes + 1 coefficients).
    pub k_modes: usize,
    /// Population size N of the birth–death model.
    pub n_pop: u32,
    /// Recovery rate gamma in D(x) = gamma x.
    pub recovery_gamma: f64,
    /// Hölder exponent targeted by the regime check.
    pub target_alpha: f64,
}

impl PriorConfig {
    pub fn new(
        beta: f64,
        theta: f64,
        k_modes: usize,
        n_pop: u32,
        recovery_gamma: f64,
        target_alpha: f64,
    ) -> Result<Self, PriorError> {
        let cfg = Self {
            beta,
            theta,
            k_modes,
            n_pop,
            recovery_gamma,
            target_alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The regime used in the numerical experiment: alpha = 1 leading to
    /// beta = 3.01, theta = 4, 101 retained modes, N = 100, gamma = 1/2.
    pub fn paper_regime() -> Self {
        Self {
            beta: 3.01,
            theta: 4.0,
            k_modes: 100,
            n_pop: 100,
            recovery_gamma: 0.5,
            target_alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        if !(self.beta > 2.0) {
            return Err(PriorError::Config(format!(
                "beta must exceed 2, got {}",
                self.beta
            )));
        }
        if !(self.theta > 0.0) {
            return Err(PriorError::Config(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if self.n_pop == 0 {
            return Err(PriorError::Config("population size must be >= 1".into()));
        }
        if !(self.recovery_gamma > 0.0) {
            return Err(PriorError::Config(format!(
                "recovery rate must be positive, got {}",
                self.recovery_gamma
            )));
        }
        if !(self.target_alpha > 0.0 && self.target_alpha <= 1.0) {
            return Err(PriorError::Config(format!(
                "target alpha must lie in (0,1], got {}",
                self.target_alpha
            )));
        }
        Ok(())
    }

    /// Well-posedness regime check (warnings, not errors): for the target
    /// alpha there must exist `q > 2/alpha` with `beta > 2q - 1` and
    /// `l > alpha + 1/2` with `theta > 2l + 1 - 2/beta`.
    pub fn regime_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let alpha = self.target_alpha;
        if self.beta <= 4.0 / alpha - 1.0 {
            warnings.push(format!(
                "beta = {} leaves no q > 2/alpha = {} with beta > 2q - 1",
                self.beta,
                2.0 / alpha
            ));
        }
        let theta_floor = 2.0 * (alpha + 0.5) + 1.0 - 2.0 / self.beta;
        if self.theta <= theta_floor {
            warnings.push(format!(
                "theta = {} leaves no l > alpha + 1/2 with theta > 2l + 1 - 2/beta (needs theta > {theta_floor})",
                self.theta
            ));
        }
        warnings
    }

    /// Series weight: `gamma_0 = 1`, `gamma_k = k^{-theta}`.
    pub fn gamma_k(&self, k: usize) -> f64 {
        gamma_weight(self.theta, k)
    }
}

fn gamma_weight(theta: f64, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        (k as f64).powf(-theta)
    }
}

/// The beta-exponential distribution with density `exp(-|x|^beta) / Z`,
/// `Z = (2/beta) Gamma(1/beta)`.
#[derive(Debug, Clone, Copy)]
pub struct BetaExp {
    beta: f64,
    norm: f64,
}

impl BetaExp {
    pub fn new(beta: f64) -> Result<Self, PriorError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(PriorError::Config(format!(
                "beta-exponential exponent must be positive, got {beta}"
            )));
        }
        let norm = 2.0 / beta * special::gamma_fn(1.0 / beta);
        Ok(Self { beta, norm })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (-x.abs().powf(self.beta)).exp() / self.norm
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let p = special::reg_lower_gamma(1.0 / self.beta, x.abs().powf(self.beta));
        if x >= 0.0 {
            0.5 * (1.0 + p)
        } else {
            0.5 * (1.0 - p)
        }
    }

    /// Upper tail `P(X > x)` for `x >= 0`, accurate in relative terms far
    /// out in the tail (where `1 - cdf` would cancel).
    pub fn tail(&self, x: f64) -> f64 {
        0.5 * special::reg_upper_gamma(1.0 / self.beta, x.powf(self.beta))
    }

    /// Quantile by safeguarded Newton iteration, converged well below the
    /// contract `|CDF(Q) - u| <= 1e-12`. Solved on the tail scale so the
    /// whitening maps stay accurate for extreme arguments.
    pub fn quantile(&self, u: f64) -> Result<f64, PriorError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(PriorError::QuantileDomain { u });
        }
        if u == 0.5 {
            return Ok(0.0);
        }
        let (tail_target, sign) = if u > 0.5 { (1.0 - u, 1.0) } else { (u, -1.0) };
        Ok(sign * self.quantile_from_tail(tail_target))
    }

    /// Solve `tail(x) = t` for `x >= 0`, given `0 < t <= 1/2`.
    fn quantile_from_tail(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0 && t <= 0.5);
        // tail(x) ~ exp(-x^beta) up to slowly varying factors
        let mut lo = 0.0_f64;
        let mut hi = (-(2.0 * t).ln()).max(1e-2).powf(1.0 / self.beta);
        while self.tail(hi) > t {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let err = self.tail(x) - t; // decreasing in x
            if err.abs() <= QUANTILE_TOL * t {
                break;
            }
            if err > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x + err / self.pdf(x);
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * (1.0 + hi) {
                break;
            }
        }
        x
    }
}

/// Quantile of the beta-exponential distribution (whitening support).
pub fn beta_exp_quantile(u: f64, beta: f64) -> Result<f64, PriorError> {
    BetaExp::new(beta)?.quantile(u)
}

/// A truncated series coefficient state. The canonical storage is the
/// coefficient vector `eta`; the whitened representation `zeta` with
/// `eta_k = Q_beta(Phi(zeta_k))` is produced and consumed on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesState {
    pub beta: f64,
    pub theta: f64,
    pub eta: Vec<f64>,
}

impl SeriesState {
    pub fn from_eta(beta: f64, theta: f64, eta: Vec<f64>) -> Self {
        Self { beta, theta, eta }
    }

    /// Map a whitened vector through the Gaussian-quantile coupling
    /// `eta_k = Q_beta(Phi(zeta_k))`. Worked on the tail-probability scale
    /// so extreme coordinates keep relative accuracy.
    pub fn from_zeta(beta: f64, theta: f64, zeta: &[f64]) -> Result<Self, PriorError> {
        let dist = BetaExp::new(beta)?;
        let eta = zeta
            .iter()
            .map(|&z| {
                let t = special::normal_cdf(-z.abs()).max(f64::MIN_POSITIVE);
                z.signum() * dist.quantile_from_tail(t.min(0.5))
            })
            .collect();
        Ok(Self { beta, theta, eta })
    }

    /// Whitened representation `zeta_k = Phi^{-1}(CDF_beta(eta_k))`.
    pub fn to_zeta(&self) -> Result<Vec<f64>, PriorError> {
        let dist = BetaExp::new(self.beta)?;
        Ok(self
            .eta
            .iter()
            .map(|&e| {
                let t = dist.tail(e.abs()).clamp(f64::MIN_POSITIVE, 0.5);
                -e.signum() * special::normal_quantile(t)
            })
            .collect())
    }

    /// The gamma-weighted series `f = sum_k gamma_k eta_k f_k`.
    pub fn weighted_series(&self) -> SeriesFunction {
        SeriesFunction::new(
            self.eta
                .iter()
                .enumerate()
                .map(|(k, e)| gamma_weight(self.theta, k) * e)
                .collect(),
        )
    }

    /// Onsager–Machlup penalty `sum_k |eta_k|^beta`.
    pub fn penalty(&self) -> f64 {
        self.eta.iter().map(|e| e.abs().powf(self.beta)).sum()
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        for (index, e) in self.eta.iter().enumerate() {
            if !e.is_finite() {
                return Err(PriorError::NonFiniteCoefficient { index });
            }
        }
        Ok(())
    }

    /// One-line JSON `{"beta":..,"theta":..,"eta":[..]}` with
    /// 17-significant-digit numbers (bit-exact decode).
    pub fn to_json_line(&self) -> String {
        let eta = self
            .eta
            .iter()
            .map(|x| format!("{x:.16e}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{{\"beta\":{:.16e},\"theta\":{:.16e},\"eta\":[{}]}}",
            self.beta, self.theta, eta
        )
    }

    pub fn from_json_line(line: &str) -> Result<Self, PriorError> {
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| PriorError::Serialization(format!("invalid state JSON: {e}")))?;
        let beta = value["beta"]
            .as_f64()
            .ok_or_else(|| PriorError::Serialization("missing field 'beta'".into()))?;
        let theta = value["theta"]
            .as_f64()
            .ok_or_else(|| PriorError::Serialization("missing field 'theta'".into()))?;
        let eta = value["eta"]
            .as_array()
            .ok_or_else(|| PriorError::Serialization("missing array 'eta'".into()))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| PriorError::Serialization("non-numeric eta entry".into()))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(Self { beta, theta, eta })
    }
}

/// `k_modes + 1` iid beta-exponential draws via inverse-CDF sampling.
/// Deterministic given the seed.
pub fn sample_eta(cfg: &PriorConfig, seed: u64) -> SeriesState {
    let dist = BetaExp::new(cfg.beta).expect("validated config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = (0..=cfg.k_modes)
        .map(|_| {
            let mut u: f64 = rng.random();
            while u <= 0.0 {
                u = rng.random();
            }
            dist.quantile(u).expect("u in (0,1)")
        })
        .collect();
    SeriesState::from_eta(cfg.beta, cfg.theta, eta)
}

/// The link `g`: identity above 1, `1/(2-x)` below 0, joined on `(0,1)` by
/// the quintic Hermite bridge matching value and first two derivatives at
/// both ends (1/2, 1/4, 1/4 and 1, 1, 0). The bridge is C^2 and strictly
/// increasing.
pub fn link_g(x: f64) -> f64 {
    if x >= 1.0 {
        x
    } else if x <= 0.0 {
        1.0 / (2.0 - x)
    } else {
        // 1/2 + x/4 + x^2/8 - 7x^3/8 + 15x^4/8 - 7x^5/8
        0.5 + x * (0.25 + x * (0.125 + x * (-0.875 + x * (1.875 + x * (-0.875)))))
    }
}

/// The boundary factor `h(x) = 1 - e^{x-1}`; `h(1) = 0` exactly.
pub fn link_h(x: f64) -> f64 {
    -((x - 1.0).exp_m1()) + 0.0
}

/// An evaluable birth rate `U = g(f) h` derived from a series state, with
/// the implied ellipticity floor reported.
#[derive(Debug, Clone)]
pub struct RateField {
    f: SeriesFunction,
    n_pop: u32,
    recovery_gamma: f64,
    m_a: f64,
    f_sup: f64,
}

impl RateField {
    pub fn eval(&self, x: f64) -> f64 {
        link_g(self.f.eval(x)) * link_h(x)
    }

    /// Grid minimum of the implied diffusion `a(x) = (U(x) + gamma x)/N`.
    pub fn m_a(&self) -> f64 {
        self.m_a
    }

    /// Grid supremum of `|f|` (same 512-node grid as `m_a`).
    pub fn f_sup(&self) -> f64 {
        self.f_sup
    }

    pub fn n_pop(&self) -> u32 {
        self.n_pop
    }

    pub fn recovery_gamma(&self) -> f64 {
        self.recovery_gamma
    }

    pub fn series(&self) -> &SeriesFunction {
        &self.f
    }
}

/// Build the rate field `U = g(f) h` from a series state.
pub fn build_u(state: &SeriesState, cfg: &PriorConfig) -> Result<RateField, PriorError> {
    state.validate()?;
    let f = state.weighted_series();
    let mut m_a = f64::INFINITY;
    let mut f_sup = 0.0_f64;
    for i in 0..RATE_GRID {
        let x = i as f64 / (RATE_GRID - 1) as f64;
        let fx = f.eval(x);
        f_sup = f_sup.max(fx.abs());
        let u = link_g(fx) * link_h(x);
        let a = (u + cfg.recovery_gamma * x) / cfg.n_pop as f64;
        m_a = m_a.min(a);
    }
    Ok(RateField {
        f,
        n_pop: cfg.n_pop,
        recovery_gamma: cfg.recovery_gamma,
        m_a,
        f_sup,
    })
}

/// Coefficient pair from arbitrary rate functions: `a = (U + D)/N` and
/// `b = U - D` with `D(x) = gamma x`.
pub fn coeff_from_rates<U>(
    u: U,
    n_pop: u32,
    recovery_gamma: f64,
    horizon: f64,
    holder_alpha: f64,
) -> Result<CoefficientField, PriorError>
where
    U: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
{
    let n = n_pop as f64;
    let u_a = u.clone();
    let a = move |x: f64| (u_a(x) + recovery_gamma * x) / n;
    let b = move |x: f64| u(x) - recovery_gamma * x;
    Ok(CoefficientField::from_spatial(a, b, horizon, holder_alpha)?)
}

/// Coefficient pair implied by a rate field on the horizon `[0, T]`.
pub fn coeff_from_u(field: &RateField, horizon: f64) -> Result<CoefficientField, PriorError> {
    let rate = field.clone();
    coeff_from_rates(
        move |x| rate.eval(x),
        field.n_pop,
        field.recovery_gamma,
        horizon,
        1.0,
    )
}

/// Zero all modes with index above `k` (the projection `P_k`).
pub fn truncate(state: &SeriesState, k: usize) -> SeriesState {
    let eta = state
        .eta
        .iter()
        .enumerate()
        .map(|(i, e)| if i <= k { *e } else { 0.0 })
        .collect();
    SeriesState::from_eta(state.beta, state.theta, eta)
}
