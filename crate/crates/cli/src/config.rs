//! Run configuration: a single JSON document with strict key checking, plus
//! the derived core configs and the config hash embedded in every artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sde_infer_core::fokker_planck_fd::{BoundaryKind, FdGrid};
use sde_infer_core::inference::ChainConfig;
use sde_infer_core::prior::PriorConfig;

use crate::error::CliError;

/// Splitmix64 step — derives independent seed streams for the pipeline
/// stages from the single configured seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub mod seed_tags {
    pub const SIMULATION: u64 = 1;
    pub const CHAIN: u64 = 2;
    pub const PRIOR_BASELINE: u64 = 3;
    pub const HELLINGER_SAMPLES: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const VALIDATE_PCN: u64 = 6;
    pub const PLOT_PRIOR_DRAWS: u64 = 7;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must match the CLI mode argument.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub io: IoSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub fd: FdSection,
    #[serde(default)]
    pub sim: SimSection,
    /// Refine the MAP estimate by coordinate descent after the
    /// best-of-samples search.
    #[serde(default)]
    pub map_refine: bool,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: String,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub beta: f64,
    pub theta: f64,
    pub k_modes: usize,
    pub n_pop: u32,
    pub recovery_gamma: f64,
    pub target_alpha: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            beta: 3.01,
            theta: 4.0,
            k_modes: 100,
            n_pop: 100,
            recovery_gamma: 0.5,
            target_alpha: 1.0,
        }
    }
}

impl PriorSection {
    pub fn to_core(&self) -> Result<PriorConfig, CliError> {
        PriorConfig::new(
            self.beta,
            self.theta,
            self.k_modes,
            self.n_pop,
            self.recovery_gamma,
            self.target_alpha,
        )
        .map_err(|e| CliError::Config(format!("prior: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub pcn_step: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            pcn_step: 0.15,
            iterations: 50_000,
            burn_in: 10_000,
            thinning: 10,
        }
    }
}

impl ChainSection {
    pub fn to_core(&self, seed: u64, fd: FdGrid) -> Result<ChainConfig, CliError> {
        let cfg = ChainConfig {
            pcn_step: self.pcn_step,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            seed,
            fd,
        };
        cfg.validate()
            .map_err(|e| CliError::Config(format!("chain: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSection {
    pub cells: usize,
    pub theta: f64,
    /// Upper bound on the internal step size of each transition solve.
    pub dt_cap: f64,
    /// "reflecting" or "absorbing".
    pub bc: String,
}

impl Default for FdSection {
    fn default() -> Self {
        Self {
            cells: 256,
            theta: 0.5,
            dt_cap: 0.01,
            bc: "reflecting".into(),
        }
    }
}

impl FdSection {
    pub fn to_core(&self) -> Result<FdGrid, CliError> {
        let bc = match self.bc.as_str() {
            "reflecting" => BoundaryKind::Reflecting,
            "absorbing" => BoundaryKind::Absorbing,
            other => {
                return Err(CliError::Config(format!(
                    "fd.bc must be \"reflecting\" or \"absorbing\", got \"{other}\""
                )))
            }
        };
        FdGrid::new(self.cells, self.dt_cap, bc, self.theta)
            .map_err(|e| CliError::Config(format!("fd: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub x0: f64,
    pub dt_sim: f64,
    pub t_horizon: f64,
    pub n_obs: usize,
    /// Polynomial coefficients of the true birth rate U (constant term
    /// first); optional — without it no truth columns are emitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_true_poly: Option<Vec<f64>>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            x0: 0.1,
            dt_sim: 1e-3,
            t_horizon: 10.0,
            n_obs: 100,
            u_true_poly: Some(vec![1.0, 0.0, -1.0]),
        }
    }
}

impl SimSection {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.dt_sim > 0.0 && self.t_horizon > 0.0) {
            return Err(CliError::Config(
                "sim.dt_sim and sim.t_horizon must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(CliError::Config(format!(
                "sim.x0 must lie in [0,1], got {}",
                self.x0
            )));
        }
        if self.n_obs == 0 {
            return Err(CliError::Config("sim.n_obs must be >= 1".into()));
        }
        Ok(())
    }

    /// Evaluate the configured truth polynomial.
    pub fn u_true(&self) -> Option<impl Fn(f64) -> f64 + Clone + Send + Sync + 'static> {
        self.u_true_poly.clone().map(|coeffs| {
            move |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
        })
    }

    /// Regular observation schedule `s_i = i T / n`, `i = 1..n`.
    pub fn observation_times(&self) -> Vec<f64> {
        (1..=self.n_obs)
            .map(|i| i as f64 * self.t_horizon / self.n_obs as f64)
            .collect()
    }
}

impl RunConfig {
    pub fn load(path: &Path, mode: &str, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let deserializer = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(deserializer).map_err(|e| {
            CliError::Config(format!("config field `{}`: {}", e.path(), e.inner()))
        })?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        if let Some(declared) = &cfg.mode {
            if declared != mode {
                return Err(CliError::Config(format!(
                    "config declares mode \"{declared}\" but the command line asked for \"{mode}\""
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.prior.to_core()?;
        self.fd.to_core()?;
        self.sim.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical serialized configuration (after any seed
    /// override), embedded in every artifact.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
