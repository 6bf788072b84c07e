//! Synthetic-data generation: Euler–Maruyama paths of the reflected SDE,
//! exact Gillespie simulation of the birth–death chain, and extraction of
//! discrete observations from a path.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::function_space::CoefficientField;

/// Observations are clamped into `(eps, 1 - eps)` so they stay in the open
/// interval; every clamp is reported back to the caller.
pub const OBSERVATION_CLIP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("input error: {0}")]
    Input(String),
    #[error("non-finite state at step {step} (x = {x})")]
    NonFiniteState { step: usize, x: f64 },
    #[error("negative jump rate {rate} at state {state}")]
    NegativeRate { rate: f64, state: u32 },
}

/// Ordered times and values of one observed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl ObservationSet {
    pub fn new(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self, SimError> {
        let set = Self {
            times,
            values,
            horizon,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.times.len() != self.values.len() {
            return Err(SimError::Input(format!(
                "times ({}) and values ({}) lengths differ",
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.is_empty() {
            return Err(SimError::Input("observation set is empty".into()));
        }
        let mut prev = 0.0;
        for (i, (&s, &y)) in self.times.iter().zip(&self.values).enumerate() {
            if !(s > prev) || s > self.horizon + 1e-12 {
                return Err(SimError::Input(format!(
                    "times must satisfy 0 < s_1 < ... <= T, violated at index {i} (s = {s})"
                )));
            }
            if !(y > 0.0 && y < 1.0) {
                return Err(SimError::Input(format!(
                    "observations must lie in (0,1), got y_{i} = {y}"
                )));
            }
            prev = s;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// JSON encoding `{"s":[...],"y":[...],"T":...}` with 17-significant-digit
    /// numbers, so the decoded values are bit-identical.
    pub fn to_json(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "{{\"s\":[{}],\"y\":[{}],\"T\":{:.16e}}}",
            join(&self.times),
            join(&self.values),
            self.horizon
        )
    }

    /// Decode from JSON; extra fields (artifact metadata) are ignored.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| SimError::Input(format!("invalid observation JSON: {e}")))?;
        let arr = |key: &str| -> Result<Vec<f64>, SimError> {
            value[key]
                .as_array()
                .ok_or_else(|| SimError::Input(format!("missing array field '{key}'")))?
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| SimError::Input(format!("non-numeric entry in '{key}'")))
                })
                .collect()
        };
        let horizon = value["T"]
            .as_f64()
            .ok_or_else(|| SimError::Input("missing field 'T'".into()))?;
        Self::new(arr("s")?, arr("y")?, horizon)
    }
}

/// A simulated trajectory on a uniform time grid.
#[derive(Debug, Clone)]
pub struct SamplePath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Linear interpolation at `t` (within the simulated horizon).
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let dt = self.times[1] - self.times[0];
        let u = (t - self.times[0]) / dt;
        // times that hit a simulation knot (up to roundoff) read it exactly
        let nearest = u.round();
        if (u - nearest).abs() < 1e-9 {
            return self.values[(nearest as usize).min(n - 1)];
        }
        let i = (u.floor() as usize).min(n - 2);
        let frac = (t - self.times[i]) / dt;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// CSV with a `t,x` header and 17-significant-digit values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x\n");
        for (t, x) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t:.16e},{x:.16e}\n"));
        }
        out
    }
}

/// Fold a point back into `[0,1]` by repeated mirroring at the walls.
fn reflect_into_unit(mut x: f64) -> f64 {
    while !(0.0..=1.0).contains(&x) {
        if x < 0.0 {
            x = -x;
        }
        if x > 1.0 {
            x = 2.0 - x;
        }
    }
    x
}

/// Euler–Maruyama path of `dX = b dt + sqrt(a) dW` with reflecting walls:
/// `X_{j+1} = X_j + b dt + sqrt(a dt) Z_j`, folded back into `[0,1]`.
/// Deterministic given the seed.
pub fn euler_maruyama(
    coeff: &CoefficientField,
    x0: f64,
    dt_sim: f64,
    t_end: f64,
    seed: u64,
) -> Result<SamplePath, SimError> {
    if !(dt_sim > 0.0) {
        return Err(SimError::Input(format!("dt_sim must be positive, got {dt_sim}")));
    }
    if !(0.0..=1.0).contains(&x0) {
        return Err(SimError::Input(format!("x0 must lie in [0,1], got {x0}")));
    }
    if !(t_end > 0.0) {
        return Err(SimError::Input(format!("t_end must be positive, got {t_end}")));
    }
    let n_steps = (t_end / dt_sim - 1e-9).ceil().max(1.0) as usize;
    let dt = t_end / n_steps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    times.push(0.0);
    values.push(x);
    for j in 0..n_steps {
        let t = j as f64 * dt;
        let drift = coeff.b(x, t);
        let diffusion = coeff.a(x, t);
        let z: f64 = rng.sample(StandardNormal);
        let proposed = x + drift * dt + (diffusion * dt).sqrt() * z;
        if !proposed.is_finite() {
            return Err(SimError::NonFiniteState {
                step: j,
                x: proposed,
            });
        }
        x = reflect_into_unit(proposed);
        times.push((j + 1) as f64 * dt);
        values.push(x);
    }
    Ok(SamplePath { times, values })
}

/// An observation set together with the indices that had to be clamped into
/// the open interval.
#[derive(Debug, Clone)]
pub struct Observed {
    pub obs: ObservationSet,
    pub clamped: Vec<usize>,
}

/// Read a path at the requested times by linear interpolation, clamping
/// values into `(eps, 1 - eps)`.
pub fn observe(path: &SamplePath, times: &[f64]) -> Result<Observed, SimError> {
    if times.is_empty() {
        return Err(SimError::Input("no observation times given".into()));
    }
    let horizon = path.horizon();
    let mut values = Vec::with_capacity(times.len());
    let mut clamped = Vec::new();
    for (i, &s) in times.iter().enumerate() {
        if s > horizon + 1e-9 {
            return Err(SimError::Input(format!(
                "observation time {s} past the simulated horizon {horizon}"
            )));
        }
        let raw = path.interpolate(s);
        let clipped = raw.clamp(OBSERVATION_CLIP, 1.0 - OBSERVATION_CLIP);
        if clipped != raw {
            clamped.push(i);
        }
        values.push(clipped);
    }
    let obs = ObservationSet::new(times.to_vec(), values, horizon)?;
    Ok(Observed { obs, clamped })
}

type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A density-dependent birth–death chain on `{0, ..., N}` with up rate
/// `N U(k/N)` and down rate `N D(k/N)`. The chain cannot leave the state
/// space: the up rate at `k = N` and the down rate at `k = 0` are pinned to
/// zero regardless of the supplied rate fields.
#[derive(Clone)]
pub struct BdSpec {
    n_pop: u32,
    up: RateFn,
    down: RateFn,
    initial: u32,
}

impl BdSpec {
    pub fn new<U, D>(n_pop: u32, up: U, down: D, initial: u32) -> Result<Self, SimError>
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if n_pop == 0 {
            return Err(SimError::Input("population size must be positive".into()));
        }
        if initial > n_pop {
            return Err(SimError::Input(format!(
                "initial count {initial} exceeds population {n_pop}"
            )));
        }
        Ok(Self {
            n_pop,
            up: Arc::new(up),
            down: Arc::new(down),
            initial,
        })
    }

    pub fn n_pop(&self) -> u32 {
        self.n_pop
    }

    fn up_rate(&self, k: u32) -> Result<f64, SimError> {
        if k >= self.n_pop {
            return Ok(0.0);
        }
        let r = self.n_pop as f64 * (self.up)(k as f64 / self.n_pop as f64);
        if r < 0.0 {
            return Err(SimError::NegativeRate { rate: r, state: k });
        }
        Ok(r)
    }

    fn down_rate(&self, k: u32) -> Result<f64, SimError> {
        if k == 0 {
            return Ok(0.0);
        }
        let r = self.n_pop as f64 * (self.down)(k as f64 / self.n_pop as f64);
        if r < 0.0 {
            return Err(SimError::NegativeRate { rate: r, state: k });
        }
        Ok(r)
    }
}

/// A continuous-time jump path, with a flag for paths that ended early in an
/// interior state whose rates both vanished.
#[derive(Debug, Clone)]
pub struct JumpPath {
    pub times: Vec<f64>,
    pub states: Vec<u32>,
    pub absorbed_early: bool,
}

impl JumpPath {
    /// State at time `t` (piecewise constant).
    pub fn state_at(&self, t: f64) -> u32 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.states[0],
            idx => self.states[idx - 1],
        }
    }
}

/// Exact Gillespie simulation of the birth–death chain up to `t_end`.
/// Deterministic given the seed.
pub fn gillespie_bd(spec: &BdSpec, t_end: f64, seed: u64) -> Result<JumpPath, SimError> {
    if !(t_end > 0.0) {
        return Err(SimError::Input(format!("t_end must be positive, got {t_end}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut k = spec.initial;
    let mut times = vec![0.0];
    let mut states = vec![k];
    let mut absorbed_early = false;
    loop {
        let up = spec.up_rate(k)?;
        let down = spec.down_rate(k)?;
        let total = up + down;
        if total <= 0.0 {
            absorbed_early = k != 0 && k != spec.n_pop;
            break;
        }
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / total;
        if t > t_end {
            break;
        }
        let v: f64 = rng.random();
        k = if v * total < up { k + 1 } else { k - 1 };
        debug_assert!(k <= spec.n_pop);
        times.push(t);
        states.push(k);
    }
    Ok(JumpPath {
        times,
        states,
        absorbed_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_coeff() -> CoefficientField {
        // U(x) = 1 - x^2, D(x) = x/2, N = 100
        CoefficientField::from_spatial(
            |x| (1.0 - x * x + 0.5 * x) / 100.0,
            |x| 1.0 - x * x - 0.5 * x,
            10.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn tiny_diffusion_stays_near_start() {
        let coeff = CoefficientField::constant(1e-8, 0.0, 1.0).unwrap();
        let path = euler_maruyama(&coeff, 0.4, 1e-3, 1.0, 11).unwrap();
        for &x in path.values() {
            assert!((x - 0.4).abs() < 1e-2);
        }
    }

    #[test]
    fn reflection_keeps_path_inside() {
        let coeff = CoefficientField::constant(0.5, 2.0, 2.0).unwrap();
        let path = euler_maruyama(&coeff, 0.9, 1e-3, 2.0, 5).unwrap();
        for &x in path.values() {
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn paths_are_deterministic_given_seed() {
        let coeff = paper_coeff();
        let p1 = euler_maruyama(&coeff, 0.1, 1e-3, 1.0, 42).unwrap();
        let p2 = euler_maruyama(&coeff, 0.1, 1e-3, 1.0, 42).unwrap();
        assert_eq!(p1.values(), p2.values());

        let spec = BdSpec::new(100, |x| 1.0 - x * x, |x| 0.5 * x, 10).unwrap();
        let j1 = gillespie_bd(&spec, 1.0, 42).unwrap();
        let j2 = gillespie_bd(&spec, 1.0, 42).unwrap();
        assert_eq!(j1.states, j2.states);
        assert_eq!(j1.times, j2.times);
    }

    /// For constant drift away from the boundary, the sample mean of
    /// X_t - x0 matches b t within 3 standard errors.
    #[test]
    fn euler_mean_drift() {
        let b = 0.3;
        let a = 0.01;
        let coeff = CoefficientField::constant(a, b, 1.0).unwrap();
        let paths = 10_000;
        let t = 0.1;
        let mut sum = 0.0;
        for seed in 0..paths {
            let p = euler_maruyama(&coeff, 0.5, 1e-3, t, seed).unwrap();
            sum += p.values().last().unwrap() - 0.5;
        }
        let mean = sum / paths as f64;
        let tol = 3.0 * (a * t / paths as f64).sqrt();
        assert!((mean - b * t).abs() <= tol, "mean {mean} vs {}", b * t);
    }

    /// Paper-regime drift pushes the path toward the zero of U - D near 0.78.
    #[test]
    fn paper_regime_terminal_mean() {
        let coeff = paper_coeff();
        let paths = 1000;
        let mut sum = 0.0;
        for seed in 0..paths {
            let p = euler_maruyama(&coeff, 0.1, 1e-3, 10.0, 1000 + seed).unwrap();
            sum += p.values().last().unwrap();
        }
        let mean = sum / paths as f64;
        assert!(
            (0.5..0.95).contains(&mean),
            "terminal mean {mean} outside (0.5, 0.95)"
        );
    }

    #[test]
    fn observe_at_knots_is_exact() {
        let coeff = paper_coeff();
        let path = euler_maruyama(&coeff, 0.1, 1e-3, 1.0, 3).unwrap();
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let observed = observe(&path, &times).unwrap();
        assert!(observed.clamped.is_empty());
        for (i, &s) in times.iter().enumerate() {
            let knot = (s / 1e-3).round() as usize;
            assert_eq!(observed.obs.values()[i], path.values()[knot]);
        }
    }

    #[test]
    fn observe_clamps_and_reports() {
        let path = SamplePath {
            times: vec![0.0, 0.5, 1.0],
            values: vec![0.0, 0.5, 1.0],
        };
        let observed = observe(&path, &[0.5, 1.0]).unwrap();
        assert_eq!(observed.clamped, vec![1]);
        assert_eq!(observed.obs.values()[1], 1.0 - OBSERVATION_CLIP);
    }

    #[test]
    fn observe_rejects_empty_and_out_of_range() {
        let path = SamplePath {
            times: vec![0.0, 1.0],
            values: vec![0.5, 0.5],
        };
        assert!(observe(&path, &[]).is_err());
        assert!(observe(&path, &[1.5]).is_err());
    }

    #[test]
    fn observation_set_validates() {
        assert!(ObservationSet::new(vec![0.2, 0.1], vec![0.5, 0.5], 1.0).is_err());
        assert!(ObservationSet::new(vec![0.1, 0.2], vec![0.5, 1.0], 1.0).is_err());
        assert!(ObservationSet::new(vec![0.1, 0.2], vec![0.5], 1.0).is_err());
    }

    #[test]
    fn observation_set_json_round_trip() {
        let obs = ObservationSet::new(
            vec![0.1, 0.2, 0.30000000000000004],
            vec![0.123456789012345678, 0.5, 0.987654321],
            10.0,
        )
        .unwrap();
        let decoded = ObservationSet::from_json(&obs.to_json()).unwrap();
        assert_eq!(obs, decoded);
    }

    #[test]
    fn gillespie_respects_state_bounds() {
        let spec = BdSpec::new(50, |_| 5.0, |_| 0.1, 48).unwrap();
        let path = gillespie_bd(&spec, 2.0, 9).unwrap();
        assert!(path.states.iter().all(|&k| k <= 50));
        // the chain spends time pinned at N where the up rate vanishes
        assert!(path.states.contains(&50));
        assert!(!path.absorbed_early);
    }

    #[test]
    fn gillespie_flags_interior_absorption() {
        let spec = BdSpec::new(50, |_| 0.0, |_| 0.0, 25).unwrap();
        let path = gillespie_bd(&spec, 1.0, 1).unwrap();
        assert!(path.absorbed_early);
        assert_eq!(path.states, vec![25]);
    }

    /// Two-simulator cross-validation of the diffusion limit: as N grows,
    /// the rescaled BD mean at t = 0.5 approaches the Euler–Maruyama mean of
    /// the limiting SDE, the gap shrinking monotonically within Monte Carlo
    /// error.
    #[test]
    fn bd_diffusion_limit_gap_shrinks() {
        let gamma = 0.5;
        let u = |x: f64| 1.0 - x * x;
        let d = move |x: f64| gamma * x;
        let t_probe = 0.5;
        let paths = 10_000u64;

        let mut gaps = Vec::new();
        let mut errs = Vec::new();
        for (block, &n) in [50u32, 100, 200].iter().enumerate() {
            let coeff = CoefficientField::from_spatial(
                move |x| (u(x) + d(x)) / n as f64,
                move |x| u(x) - d(x),
                1.0,
                1.0,
            )
            .unwrap();
            let y0 = (0.1 * n as f64).round() as u32;
            let spec = BdSpec::new(n, u, d, y0).unwrap();

            let mut bd_sum = 0.0;
            let mut bd_sq = 0.0;
            let mut em_sum = 0.0;
            let mut em_sq = 0.0;
            for i in 0..paths {
                let seed = (block as u64) * 1_000_000 + i;
                let jump = gillespie_bd(&spec, t_probe, seed).unwrap();
                let yb = jump.state_at(t_probe) as f64 / n as f64;
                bd_sum += yb;
                bd_sq += yb * yb;
                let em = euler_maruyama(&coeff, y0 as f64 / n as f64, 1e-3, t_probe, seed ^ 0x9e37)
                    .unwrap();
                let xe = *em.values().last().unwrap();
                em_sum += xe;
                em_sq += xe * xe;
            }
            let m = paths as f64;
            let bd_mean = bd_sum / m;
            let em_mean = em_sum / m;
            let bd_se = ((bd_sq / m - bd_mean * bd_mean).max(0.0) / m).sqrt();
            let em_se = ((em_sq / m - em_mean * em_mean).max(0.0) / m).sqrt();
            gaps.push((bd_mean - em_mean).abs());
            errs.push(bd_se + em_se);
        }
        for i in 1..gaps.len() {
            assert!(
                gaps[i] <= gaps[i - 1] + 2.0 * (errs[i] + errs[i - 1]),
                "gaps {gaps:?} not shrinking within MC error {errs:?}"
            );
        }
    }
}
