//! Artifact writers and readers. Every file embeds the config hash and seed
//! (a `#` comment header for CSV, fields for JSON), numbers are rendered
//! with 17 significant digits, and nothing time- or machine-dependent is
//! written, so reruns with the same config and seed are byte-identical.

use std::path::{Path, PathBuf};

use sde_infer_core::prior::SeriesState;
use sde_infer_core::simulate::{Observed, SamplePath};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Meta {
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    fn csv_header(&self) -> String {
        format!("# config={} seed={}\n", self.config_sha256, self.seed)
    }
}

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

pub fn write_path_csv(path: &Path, meta: &Meta, sample_path: &SamplePath) -> Result<(), CliError> {
    let mut out = meta.csv_header();
    out.push_str(&sample_path.to_csv());
    write_file(path, &out)
}

pub fn write_observations_json(
    path: &Path,
    meta: &Meta,
    observed: &Observed,
) -> Result<(), CliError> {
    // extend the plain {"s":..,"y":..,"T":..} encoding with metadata fields;
    // decoders ignore the extras
    let base = observed.obs.to_json();
    let clamped = observed
        .clamped
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let augmented = format!(
        "{},\"config_sha256\":\"{}\",\"seed\":{},\"clamped_indices\":[{}]}}\n",
        &base[..base.len() - 1],
        meta.config_sha256,
        meta.seed,
        clamped
    );
    write_file(path, &augmented)
}

pub fn write_samples_jsonl(
    path: &Path,
    meta: &Meta,
    samples: &[SeriesState],
) -> Result<(), CliError> {
    let mut out = format!(
        "{{\"config_sha256\":\"{}\",\"seed\":{}}}\n",
        meta.config_sha256, meta.seed
    );
    for s in samples {
        out.push_str(&s.to_json_line());
        out.push('\n');
    }
    write_file(path, &out)
}

/// Read a samples file, skipping the metadata header line.
pub fn read_samples_jsonl(path: &Path) -> Result<Vec<SeriesState>, CliError> {
    let text = read_file(path)?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match SeriesState::from_json_line(line) {
            Ok(s) => samples.push(s),
            Err(e) if idx == 0 => {
                // metadata header
                let _ = e;
            }
            Err(e) => {
                return Err(CliError::Io(format!(
                    "{}:{}: bad sample line: {e}",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Ok(samples)
}

pub fn write_trace_csv(
    path: &Path,
    meta: &Meta,
    loglik_trace: &[f64],
    accepted: &[bool],
) -> Result<(), CliError> {
    let mut out = meta.csv_header();
    out.push_str("iteration,loglik,accepted\n");
    for (i, (ll, acc)) in loglik_trace.iter().zip(accepted).enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, fmt17(*ll), u8::from(*acc)));
    }
    write_file(path, &out)
}

/// Read the log-likelihood column of a trace file.
pub fn read_trace_logliks(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("iteration") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::Io(format!(
                "{}: malformed trace line: {line}",
                path.display()
            )));
        }
        let ll: f64 = fields[1]
            .parse()
            .map_err(|e| CliError::Io(format!("{}: bad loglik: {e}", path.display())))?;
        out.push(ll);
    }
    Ok(out)
}

/// Columns: x, optional u_true, cm_u, map_u.
pub fn write_estimates_csv(
    path: &Path,
    meta: &Meta,
    grid: &[f64],
    u_true: Option<&[f64]>,
    cm: &[f64],
    map_u: &[f64],
) -> Result<(), CliError> {
    let mut out = meta.csv_header();
    match u_true {
        Some(truth) => {
            out.push_str("x,u_true,cm_u,map_u\n");
            for i in 0..grid.len() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt17(grid[i]),
                    fmt17(truth[i]),
                    fmt17(cm[i]),
                    fmt17(map_u[i])
                ));
            }
        }
        None => {
            out.push_str("x,cm_u,map_u\n");
            for i in 0..grid.len() {
                out.push_str(&format!(
                    "{},{},{}\n",
                    fmt17(grid[i]),
                    fmt17(cm[i]),
                    fmt17(map_u[i])
                ));
            }
        }
    }
    write_file(path, &out)
}

pub fn artifact_path(out_dir: &str, name: &str) -> PathBuf {
    Path::new(out_dir).join(name)
}

/// Suffix artifacts produced by a truncated-likelihood run: `samples.jsonl`
/// becomes `samples_k<k>.jsonl`.
pub fn truncated_name(name: &str, k: Option<usize>) -> String {
    match k {
        None => name.to_string(),
        Some(k) => match name.rsplit_once('.') {
            Some((stem, ext)) => format!("{stem}_k{k}.{ext}"),
            None => format!("{name}_k{k}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_names() {
        assert_eq!(truncated_name("samples.jsonl", None), "samples.jsonl");
        assert_eq!(truncated_name("samples.jsonl", Some(8)), "samples_k8.jsonl");
        assert_eq!(truncated_name("trace.csv", Some(20)), "trace_k20.csv");
    }

    #[test]
    fn samples_round_trip_with_header() {
        let dir = std::env::temp_dir().join("sde_infer_artifact_test");
        let path = dir.join("samples.jsonl");
        let meta = Meta {
            config_sha256: "ab".repeat(32),
            seed: 9,
        };
        let samples = vec![
            SeriesState::from_eta(3.01, 4.0, vec![0.1, -0.2]),
            SeriesState::from_eta(3.01, 4.0, vec![0.3, 0.4]),
        ];
        write_samples_jsonl(&path, &meta, &samples).unwrap();
        let back = read_samples_jsonl(&path).unwrap();
        assert_eq!(back, samples);
        std::fs::remove_dir_all(&dir).ok();
    }
}
