//! The cross-oracle validation suites behind `sde-infer validate`.
//!
//! Five suites: images-vs-FD at constant coefficients, FD convergence
//! order, parametrix-vs-FD at variable coefficients (skipped by `--quick`),
//! pCN prior preservation, and Hellinger truncation monotonicity. Each
//! records its measured numbers; thresholds are fixed here, not read from
//! configuration.

use sde_infer_core::fokker_planck_fd::{transition_density, FdGrid};
use sde_infer_core::images_kernel::DerivOrder;
use sde_infer_core::inference::{
    hellinger_truncation_gaps, ks_distance, run_chain_with, ChainConfig,
};
use sde_infer_core::parametrix_green::{ParametrixConfig, ParametrixSolver};
use sde_infer_core::prior::{coeff_from_rates, sample_eta, PriorConfig};
use sde_infer_core::simulate::{euler_maruyama, observe};
use sde_infer_core::{BoundaryCondition, BoundaryKind, CoefficientField, ImagesKernelSpec};

use crate::artifacts::{self, Meta};
use crate::config::{derive_seed, seed_tags, RunConfig};
use crate::error::CliError;

/// Constant-coefficient FD error against the images kernel at 512 cells.
const IMAGES_FD_TOLERANCE: f64 = 5e-3;
/// Error reduction required when doubling the cell count (second order
/// would give 4).
const FD_CONVERGENCE_FACTOR: f64 = 3.5;
/// Relative error of the parametrix Green function against the FD oracle.
const PARAMETRIX_REL_TOLERANCE: f64 = 2e-2;
/// Kolmogorov–Smirnov bound for the zero-likelihood pCN chain marginal.
const PCN_KS_BOUND: f64 = 0.02;
/// Monte Carlo sample count for the Hellinger diagnostics.
const HELLINGER_SAMPLES: usize = 100;
/// Bootstrap replicates behind the Hellinger standard errors.
const HELLINGER_BOOTSTRAP: usize = 200;

#[derive(Debug)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug)]
pub struct ValidationReport {
    pub quick: bool,
    pub suites: Vec<SuiteResult>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }

    pub fn first_failure(&self) -> Option<String> {
        self.suites.iter().find(|s| !s.pass).map(|s| {
            format!(
                "suite '{}' failed ({})",
                s.name,
                s.metrics
                    .iter()
                    .map(|(k, v)| format!("{k}={v:.6e}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
    }

    fn to_json(&self, meta: &Meta) -> String {
        let mut out = format!(
            "{{\"config_sha256\":\"{}\",\"seed\":{},\"quick\":{},\"pass\":{},\"suites\":[",
            meta.config_sha256,
            meta.seed,
            self.quick,
            self.pass()
        );
        for (i, suite) in self.suites.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let metrics = suite
                .metrics
                .iter()
                .map(|(k, v)| format!("\"{k}\":{}", artifacts::fmt17(*v)))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!(
                "{{\"name\":\"{}\",\"pass\":{},\"metrics\":{{{metrics}}}}}",
                suite.name, suite.pass
            ));
        }
        out.push_str("]}\n");
        out
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn fd_error_vs_images(cells: usize, dt: f64) -> Result<f64, CliError> {
    let coeff = CoefficientField::constant(1.0, 0.0, 10.0).map_err(numeric)?;
    let grid = FdGrid::new(cells, dt, BoundaryKind::Reflecting, 0.5).map_err(numeric)?;
    let p = transition_density(&coeff, &grid, 0.5, 0.0, 0.05).map_err(numeric)?;
    let oracle = ImagesKernelSpec::new(BoundaryCondition::Neumann, 0.5).map_err(numeric)?;
    let xi_eff = grid.delta_cell_center(0.5);
    let mut max_err = 0.0_f64;
    for i in 0..p.cells() {
        let want = oracle
            .images_density(p.cell_center(i), 0.05, xi_eff, 0.0, DerivOrder::Zero)
            .map_err(numeric)?;
        max_err = max_err.max((p.values[i] - want).abs());
    }
    Ok(max_err)
}

fn suite_images_vs_fd() -> Result<SuiteResult, CliError> {
    let err = fd_error_vs_images(512, 1e-4)?;
    Ok(SuiteResult {
        name: "images_vs_fd_constant_coefficients".into(),
        pass: err <= IMAGES_FD_TOLERANCE,
        metrics: vec![
            ("max_abs_error_512".into(), err),
            ("tolerance".into(), IMAGES_FD_TOLERANCE),
        ],
    })
}

fn suite_fd_convergence() -> Result<SuiteResult, CliError> {
    let e512 = fd_error_vs_images(512, 1e-4)?;
    let e1024 = fd_error_vs_images(1024, 2.5e-5)?;
    let ratio = e512 / e1024;
    Ok(SuiteResult {
        name: "fd_convergence_order".into(),
        pass: ratio >= FD_CONVERGENCE_FACTOR,
        metrics: vec![
            ("error_512".into(), e512),
            ("error_1024".into(), e1024),
            ("reduction_factor".into(), ratio),
            ("required_factor".into(), FD_CONVERGENCE_FACTOR),
        ],
    })
}

fn suite_parametrix_vs_fd() -> Result<SuiteResult, CliError> {
    let a = |x: f64| 1.0 + 0.1 * (2.0 * std::f64::consts::PI * x).sin();
    let b = |_: f64| 0.2;
    let gap = 0.1;
    let source = 0.45;

    let coeff_fd = CoefficientField::from_spatial(a, b, 1.0, 1.0).map_err(numeric)?;
    let grid = FdGrid::new(2048, 1e-3, BoundaryKind::Reflecting, 0.5).map_err(numeric)?;
    let density = transition_density(&coeff_fd, &grid, source, 0.0, gap).map_err(numeric)?;
    let source_eff = grid.delta_cell_center(source);

    let coeff_half =
        CoefficientField::from_spatial(move |x| 0.5 * a(x), b, 1.0, 1.0).map_err(numeric)?;
    let cfg = ParametrixConfig::new(BoundaryCondition::Neumann);
    let mut worst = 0.0_f64;
    for &probe in &[0.3, 0.4, 0.5, 0.6, 0.7] {
        let fd_value = density.interpolate(probe);
        let solver = ParametrixSolver::new(&coeff_half, &cfg, probe, 0.0, gap).map_err(numeric)?;
        let green = solver.green(source_eff).map_err(numeric)?;
        worst = worst.max((green - fd_value).abs() / fd_value.abs());
    }
    Ok(SuiteResult {
        name: "parametrix_vs_fd_variable_coefficients".into(),
        pass: worst <= PARAMETRIX_REL_TOLERANCE,
        metrics: vec![
            ("worst_relative_error".into(), worst),
            ("tolerance".into(), PARAMETRIX_REL_TOLERANCE),
        ],
    })
}

fn suite_pcn_prior_preservation(cfg: &RunConfig) -> Result<SuiteResult, CliError> {
    // the eta_0 marginal does not depend on the truncation level, so a
    // single-mode chain checks the whitening coupling at full length
    let prior = PriorConfig::new(
        cfg.prior.beta,
        cfg.prior.theta,
        0,
        cfg.prior.n_pop,
        cfg.prior.recovery_gamma,
        cfg.prior.target_alpha,
    )
    .map_err(numeric)?;
    let chain = ChainConfig {
        pcn_step: 0.7,
        iterations: 100_000,
        burn_in: 1,
        thinning: 1,
        seed: derive_seed(cfg.seed, seed_tags::VALIDATE_PCN),
        fd: cfg.fd.to_core()?,
    };
    let run = run_chain_with(&chain, &prior, |_| Ok(0.0)).map_err(numeric)?;
    let chain_marginal: Vec<f64> = run.samples.iter().map(|s| s.eta[0]).collect();
    let direct: Vec<f64> = (0..chain_marginal.len())
        .map(|i| {
            sample_eta(
                &prior,
                derive_seed(cfg.seed, seed_tags::VALIDATE_PCN ^ 0xD1E5).wrapping_add(i as u64),
            )
            .eta[0]
        })
        .collect();
    let ks = ks_distance(&chain_marginal, &direct);
    Ok(SuiteResult {
        name: "pcn_prior_preservation".into(),
        pass: ks < PCN_KS_BOUND && run.acceptance_rate == 1.0,
        metrics: vec![
            ("ks_distance".into(), ks),
            ("ks_bound".into(), PCN_KS_BOUND),
            ("acceptance_rate".into(), run.acceptance_rate),
        ],
    })
}

fn suite_hellinger_monotonicity(cfg: &RunConfig) -> Result<SuiteResult, CliError> {
    let prior = cfg.prior.to_core()?;
    let u_true = cfg.sim.u_true().ok_or_else(|| {
        CliError::Config("the Hellinger suite needs sim.u_true_poly to simulate data".into())
    })?;
    let coeff = coeff_from_rates(
        u_true,
        prior.n_pop,
        prior.recovery_gamma,
        cfg.sim.t_horizon,
        prior.target_alpha,
    )
    .map_err(numeric)?;
    let path = euler_maruyama(
        &coeff,
        cfg.sim.x0,
        cfg.sim.dt_sim,
        cfg.sim.t_horizon,
        derive_seed(cfg.seed, seed_tags::SIMULATION),
    )
    .map_err(numeric)?;
    let observed = observe(&path, &cfg.sim.observation_times()).map_err(numeric)?;

    let samples: Vec<_> = (0..HELLINGER_SAMPLES)
        .map(|i| {
            sample_eta(
                &prior,
                derive_seed(cfg.seed, seed_tags::HELLINGER_SAMPLES).wrapping_add(i as u64),
            )
        })
        .collect();
    let ks: Vec<usize> = [16usize, 8, 4, 2]
        .iter()
        .map(|d| (prior.k_modes / d).max(1))
        .chain([(prior.k_modes * 4 / 5).max(1)])
        .collect();
    let fd = cfg.fd.to_core()?;
    let points = hellinger_truncation_gaps(
        &samples,
        &observed.obs,
        &ks,
        &prior,
        &fd,
        HELLINGER_BOOTSTRAP,
        derive_seed(cfg.seed, seed_tags::BOOTSTRAP),
    )
    .map_err(numeric)?;

    let mut monotone = true;
    for w in points.windows(2) {
        if w[1].gap > w[0].gap + w[0].bootstrap_se + w[1].bootstrap_se {
            monotone = false;
        }
    }
    let slope = log_log_slope(&points);
    let mut metrics: Vec<(String, f64)> = points
        .iter()
        .flat_map(|p| {
            [
                (format!("gap_k{}", p.k), p.gap),
                (format!("se_k{}", p.k), p.bootstrap_se),
            ]
        })
        .collect();
    metrics.push(("log_log_slope".into(), slope));
    Ok(SuiteResult {
        name: "hellinger_gap_monotonicity".into(),
        pass: monotone && slope < 0.0,
        metrics,
    })
}

fn log_log_slope(points: &[sde_infer_core::inference::HellingerPoint]) -> f64 {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.gap > 0.0)
        .map(|p| ((p.k as f64).ln(), p.gap.ln()))
        .collect();
    let n = data.len() as f64;
    let (sx, sy): (f64, f64) = data.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (sxx, sxy): (f64, f64) = data
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x * x, b + x * y));
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn cmd_validate(cfg: &RunConfig, quick: bool) -> Result<ValidationReport, CliError> {
    let mut suites = vec![suite_images_vs_fd()?, suite_fd_convergence()?];
    if !quick {
        suites.push(suite_parametrix_vs_fd()?);
    }
    suites.push(suite_pcn_prior_preservation(cfg)?);
    suites.push(suite_hellinger_monotonicity(cfg)?);
    let report = ValidationReport { quick, suites };

    let meta = Meta {
        config_sha256: cfg.hash(),
        seed: cfg.seed,
    };
    artifacts::write_file(
        &artifacts::artifact_path(&cfg.io.out_dir, "validation.json"),
        &report.to_json(&meta),
    )?;
    for suite in &report.suites {
        println!(
            "suite {}: {}",
            suite.name,
            if suite.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(report)
}
