//! The pipeline commands: simulate -> sample -> map, plus the bundled
//! paper-regime reproduction.

use std::path::{Path, PathBuf};

use sde_infer_core::inference::{
    self, find_map_with, run_chain_with, ChainError, PosteriorRun, ESTIMATOR_GRID,
};
use sde_infer_core::prior::{build_u, coeff_from_rates, sample_eta, truncate, SeriesState};
use sde_infer_core::simulate::{euler_maruyama, observe, ObservationSet};

use crate::artifacts::{self, Meta};
use crate::config::{derive_seed, seed_tags, RunConfig};
use crate::error::CliError;

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn meta(cfg: &RunConfig) -> Meta {
    Meta {
        config_sha256: cfg.hash(),
        seed: cfg.seed,
    }
}

pub struct SimulateOutput {
    pub observations_path: PathBuf,
    pub path_csv: PathBuf,
    pub n: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub clamped: usize,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput, CliError> {
    let prior = cfg.prior.to_core()?;
    let u_true = cfg.sim.u_true().ok_or_else(|| {
        CliError::Config("simulate needs sim.u_true_poly (the true birth rate)".into())
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

    let meta = meta(cfg);
    let path_csv = artifacts::artifact_path(&cfg.io.out_dir, "path.csv");
    let obs_json = artifacts::artifact_path(&cfg.io.out_dir, "observations.json");
    artifacts::write_path_csv(&path_csv, &meta, &path)?;
    artifacts::write_observations_json(&obs_json, &meta, &observed)?;

    let (y_min, y_max) = observed
        .obs
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        });
    println!(
        "simulated {} observations on [0, {}], y in [{y_min:.4}, {y_max:.4}], {} clamped",
        observed.obs.len(),
        observed.obs.horizon(),
        observed.clamped.len()
    );
    Ok(SimulateOutput {
        observations_path: obs_json,
        path_csv,
        n: observed.obs.len(),
        y_min,
        y_max,
        clamped: observed.clamped.len(),
    })
}

pub struct SampleOutput {
    pub acceptance_rate: f64,
    pub map_value: f64,
    pub cm_l2_to_truth: Option<f64>,
    pub samples_path: PathBuf,
}

fn load_observations(cfg: &RunConfig, obs_path: Option<&Path>) -> Result<ObservationSet, CliError> {
    let default_path = artifacts::artifact_path(&cfg.io.out_dir, "observations.json");
    let path = obs_path.unwrap_or(&default_path);
    let text = artifacts::read_file(path)?;
    ObservationSet::from_json(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn cmd_sample(
    cfg: &RunConfig,
    obs_path: Option<&Path>,
    truncate_k: Option<usize>,
) -> Result<SampleOutput, CliError> {
    let prior = cfg.prior.to_core()?;
    for warning in prior.regime_warnings() {
        eprintln!("warning: {warning}");
    }
    let obs = load_observations(cfg, obs_path)?;
    if obs.len() <= 1 {
        println!("at most one observation: the likelihood is the empty product and the run reproduces the prior");
    }
    let fd = cfg.fd.to_core()?;
    let chain = cfg
        .chain
        .to_core(derive_seed(cfg.seed, seed_tags::CHAIN), fd)?;

    let loglik = {
        let obs = obs.clone();
        move |state: &SeriesState| -> Result<f64, ChainError> {
            match truncate_k {
                None => inference::bd_log_likelihood(state, &prior, &obs, &fd),
                Some(k) => inference::bd_log_likelihood(&truncate(state, k), &prior, &obs, &fd),
            }
        }
    };
    let run = run_chain_with(&chain, &prior, &loglik).map_err(numeric)?;
    for warning in &run.warnings {
        eprintln!("warning: {warning}");
    }

    let objective =
        |state: &SeriesState| -> Result<f64, ChainError> { Ok(-loglik(state)? + state.penalty()) };
    let (map_state, map_value) =
        find_map_with(&run, objective, cfg.map_refine).map_err(numeric)?;

    let meta = meta(cfg);
    let name = |base: &str| {
        artifacts::artifact_path(&cfg.io.out_dir, &artifacts::truncated_name(base, truncate_k))
    };
    let samples_path = name("samples.jsonl");
    artifacts::write_samples_jsonl(&samples_path, &meta, &run.samples)?;
    artifacts::write_trace_csv(&name("trace.csv"), &meta, &run.loglik_trace, &run.accepted)?;

    let map_curve = rate_curve(&map_state, &prior, &run.cm_grid)?;
    let truth_curve = cfg
        .sim
        .u_true()
        .map(|u| run.cm_grid.iter().map(|&x| u(x)).collect::<Vec<f64>>());
    artifacts::write_estimates_csv(
        &name("estimates.csv"),
        &meta,
        &run.cm_grid,
        truth_curve.as_deref(),
        &run.cm_values,
        &map_curve,
    )?;

    let cm_l2_to_truth = truth_curve
        .as_ref()
        .map(|truth| inference::l2_distance(&run.cm_values, truth));
    println!(
        "acceptance rate {:.3}, MAP objective {:.6}",
        run.acceptance_rate, map_value
    );
    if let Some(err) = cm_l2_to_truth {
        println!("CM L2 distance to truth {err:.6}");
    }
    Ok(SampleOutput {
        acceptance_rate: run.acceptance_rate,
        map_value,
        cm_l2_to_truth,
        samples_path,
    })
}

fn rate_curve(
    state: &SeriesState,
    prior: &sde_infer_core::prior::PriorConfig,
    grid: &[f64],
) -> Result<Vec<f64>, CliError> {
    let field = build_u(state, prior).map_err(numeric)?;
    Ok(grid.iter().map(|&x| field.eval(x)).collect())
}

pub struct MapOutput {
    pub map_value: f64,
    pub map_json: PathBuf,
}

/// Re-estimate the MAP from previously written samples and trace, refining
/// by coordinate descent when configured.
pub fn cmd_map(cfg: &RunConfig, obs_path: Option<&Path>) -> Result<MapOutput, CliError> {
    let prior = cfg.prior.to_core()?;
    let obs = load_observations(cfg, obs_path)?;
    let fd = cfg.fd.to_core()?;
    let samples =
        artifacts::read_samples_jsonl(&artifacts::artifact_path(&cfg.io.out_dir, "samples.jsonl"))?;
    if samples.is_empty() {
        return Err(CliError::Io("samples.jsonl holds no samples".into()));
    }
    let trace =
        artifacts::read_trace_logliks(&artifacts::artifact_path(&cfg.io.out_dir, "trace.csv"))?;
    // retained sample m (1-based) sits at iteration burn_in + m * thinning
    let sample_logliks: Vec<f64> = (1..=samples.len())
        .map(|m| {
            trace
                .get(cfg.chain.burn_in + m * cfg.chain.thinning - 1)
                .copied()
                .ok_or_else(|| {
                    CliError::Io("trace.csv shorter than the retained sample schedule".into())
                })
        })
        .collect::<Result<_, _>>()?;

    let grid: Vec<f64> = (0..ESTIMATOR_GRID)
        .map(|i| i as f64 / (ESTIMATOR_GRID - 1) as f64)
        .collect();
    let mut cm = vec![0.0; grid.len()];
    for s in &samples {
        let curve = rate_curve(s, &prior, &grid)?;
        for (acc, v) in cm.iter_mut().zip(&curve) {
            *acc += v;
        }
    }
    cm.iter_mut().for_each(|v| *v /= samples.len() as f64);

    let run = PosteriorRun {
        map_state: samples[0].clone(),
        map_value: f64::INFINITY,
        samples,
        sample_logliks,
        loglik_trace: trace,
        accepted: Vec::new(),
        acceptance_rate: 0.0,
        cm_grid: grid.clone(),
        cm_values: cm.clone(),
        warnings: Vec::new(),
    };
    let (map_state, map_value) =
        inference::find_map(&run, &obs, &prior, &fd, cfg.map_refine).map_err(numeric)?;

    let meta = meta(cfg);
    let map_json = artifacts::artifact_path(&cfg.io.out_dir, "map.json");
    let body = format!(
        "{{\"config_sha256\":\"{}\",\"seed\":{},\"map_value\":{},\"state\":{}}}\n",
        meta.config_sha256,
        meta.seed,
        artifacts::fmt17(map_value),
        map_state.to_json_line()
    );
    artifacts::write_file(&map_json, &body)?;

    let map_curve = rate_curve(&map_state, &prior, &grid)?;
    let truth_curve = cfg
        .sim
        .u_true()
        .map(|u| grid.iter().map(|&x| u(x)).collect::<Vec<f64>>());
    artifacts::write_estimates_csv(
        &artifacts::artifact_path(&cfg.io.out_dir, "estimates.csv"),
        &meta,
        &grid,
        truth_curve.as_deref(),
        &cm,
        &map_curve,
    )?;
    println!("MAP objective {map_value:.6}");
    Ok(MapOutput { map_value, map_json })
}

/// The bundled paper-regime experiment: simulate with the configured seed,
/// sample the posterior, and emit a plot-ready table of prior draws,
/// posterior draws, CM, MAP and the truth.
pub fn cmd_reproduce_paper(cfg: &RunConfig) -> Result<SampleOutput, CliError> {
    let sim_out = cmd_simulate(cfg)?;
    let sample_out = cmd_sample(cfg, Some(&sim_out.observations_path), None)?;

    let prior = cfg.prior.to_core()?;
    let grid: Vec<f64> = (0..ESTIMATOR_GRID)
        .map(|i| i as f64 / (ESTIMATOR_GRID - 1) as f64)
        .collect();
    let n_draw_columns = 8;
    let mut prior_draws = Vec::new();
    for i in 0..n_draw_columns {
        let state = sample_eta(
            &prior,
            derive_seed(cfg.seed, seed_tags::PLOT_PRIOR_DRAWS).wrapping_add(i as u64),
        );
        prior_draws.push(rate_curve(&state, &prior, &grid)?);
    }
    let samples = artifacts::read_samples_jsonl(&sample_out.samples_path)?;
    let mut posterior_draws = Vec::new();
    for i in 0..n_draw_columns {
        let idx = (i * samples.len().saturating_sub(1)) / (n_draw_columns - 1).max(1);
        posterior_draws.push(rate_curve(&samples[idx], &prior, &grid)?);
    }
    let estimates = artifacts::read_file(&artifacts::artifact_path(&cfg.io.out_dir, "estimates.csv"))?;
    let mut cm = Vec::new();
    let mut map_u = Vec::new();
    let mut truth = Vec::new();
    for line in estimates.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() == 4 {
            truth.push(fields[1].parse::<f64>().map_err(|e| CliError::Io(e.to_string()))?);
            cm.push(fields[2].parse::<f64>().map_err(|e| CliError::Io(e.to_string()))?);
            map_u.push(fields[3].parse::<f64>().map_err(|e| CliError::Io(e.to_string()))?);
        } else if fields.len() == 3 {
            cm.push(fields[1].parse::<f64>().map_err(|e| CliError::Io(e.to_string()))?);
            map_u.push(fields[2].parse::<f64>().map_err(|e| CliError::Io(e.to_string()))?);
        }
    }

    let meta = meta(cfg);
    let mut out = format!("# config={} seed={}\n", meta.config_sha256, meta.seed);
    out.push_str("x");
    if !truth.is_empty() {
        out.push_str(",u_true");
    }
    out.push_str(",cm_u,map_u");
    for i in 0..n_draw_columns {
        out.push_str(&format!(",prior_{}", i + 1));
    }
    for i in 0..n_draw_columns {
        out.push_str(&format!(",posterior_{}", i + 1));
    }
    out.push('\n');
    for (i, &x) in grid.iter().enumerate() {
        out.push_str(&artifacts::fmt17(x));
        if !truth.is_empty() {
            out.push_str(&format!(",{}", artifacts::fmt17(truth[i])));
        }
        out.push_str(&format!(
            ",{},{}",
            artifacts::fmt17(cm[i]),
            artifacts::fmt17(map_u[i])
        ));
        for draw in &prior_draws {
            out.push_str(&format!(",{}", artifacts::fmt17(draw[i])));
        }
        for draw in &posterior_draws {
            out.push_str(&format!(",{}", artifacts::fmt17(draw[i])));
        }
        out.push('\n');
    }
    artifacts::write_file(&artifacts::artifact_path(&cfg.io.out_dir, "plot_data.csv"), &out)?;
    Ok(sample_out)
}
