//! Experiment orchestration: configuration, seed management, trial running,
//! acceptance statistics and CSV/JSONL emission.
//!
//! Reproducibility contract: (master seed, config) fully determines every
//! emitted byte. Trials run on a rayon pool but rows are collected in trial
//! order, so output does not depend on parallelism. Wall-clock time is kept
//! in memory for interactive summaries and never serialized.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advice::{find_advice_medium, find_advice_small};
use crate::dist::{ExplicitDistribution, Label};
use crate::error::{Error, Result};
use crate::finite::find_advice_large;
use crate::lowerbound::{LambdaMode, PerturbationEnsemble};
use crate::oracle::{derive_seed, SampleOracle};
use crate::report::EstimatorParams;
use crate::toplevel::{estimate_l2_top_level_with, report_branch, FaithfulAdvice, RescaledAdvice};

/// Statistical acceptance thresholds used by every statistical suite, in one
/// place so tolerances stay auditable.
pub mod thresholds {
    /// Mean-comparison band: |empirical − exact| ≤ 3 standard errors.
    pub const SE_BAND: f64 = 3.0;
    /// Binomial confidence at 99%: frequency margin z·√(p(1−p)/n).
    pub const BINOM_Z: f64 = 2.576;

    /// The 99% binomial margin around probability `p` at `n` trials.
    pub fn binom_margin(p: f64, n: u64) -> f64 {
        BINOM_Z * (p * (1.0 - p) / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdviceFinder {
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// The top-level estimator, once per trial.
    Estimate,
    /// One advice finder per trial, judged against the exact t coefficient.
    AdviceCheck(AdviceFinder),
    /// Ensemble draws with exact norm computation per trial.
    Lowerbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dist_spec: String,
    pub params: EstimatorParams,
    /// Scale for the advice stage of the top-level estimator, when it should
    /// differ from the pipeline scale. None = propagate unchanged.
    pub advice_scale: Option<f64>,
    pub trials: u64,
    pub master_seed: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be ≥ 1".into()));
        }
        parse_dist_spec(&self.dist_spec).map(|_| ())
    }
}

/// One experiment trial. `wall_ms` is informational only and is not part of
/// the serialized schema (emitted files must be byte-identical across runs).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrialRow {
    pub trial: u64,
    pub seed: u64,
    pub value: f64,
    pub samples: u64,
    pub branch: String,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Per-trial row of the lower-bound experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LowerboundRow {
    pub trial: u64,
    pub seed: u64,
    pub lambda: f64,
    pub nu_l2_sq: f64,
    pub deviated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub trials: u64,
    /// Trials that hit the sample budget; excluded from the statistics below.
    pub flagged: u64,
    pub mean: f64,
    pub std_err: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub median_samples: f64,
    /// Exact functional the experiment measures against, when defined.
    pub exact: Option<f64>,
    /// Per-kind success frequency: in-(1±eps)-range for Estimate, advice
    /// dominance for AdviceCheck, norm deviation for Lowerbound.
    pub success_freq: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Rows {
    Trials(Vec<TrialRow>),
    Lowerbound(Vec<LowerboundRow>),
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Summary,
    pub rows: Rows,
}

/// Parses `name:key=value,key=value`, a bare `name`, or `@file.csv`.
pub fn parse_dist_spec(spec: &str) -> Result<ExplicitDistribution> {
    if let Some(path) = spec.strip_prefix('@') {
        return read_dist_csv(Path::new(path));
    }
    let (name, rest) = match spec.find(':') {
        Some(idx) => (&spec[..idx], Some(&spec[idx + 1..])),
        None => (spec, None),
    };
    if name.is_empty() {
        return Err(Error::ParseSpec {
            pos: 0,
            msg: "empty distribution name".into(),
        });
    }
    let mut params = BTreeMap::new();
    if let Some(rest) = rest {
        let base = name.len() + 1;
        let mut pos = 0usize;
        for piece in rest.split(',') {
            let (key, value) = piece.split_once('=').ok_or(Error::ParseSpec {
                pos: base + pos,
                msg: format!("expected key=value, got `{piece}`"),
            })?;
            let parsed: f64 = value.parse().map_err(|_| Error::ParseSpec {
                pos: base + pos + key.len() + 1,
                msg: format!("`{value}` is not a number"),
            })?;
            params.insert(key.trim().to_string(), parsed);
            pos += piece.len() + 1;
        }
    }
    crate::zoo::build(name, &params)
}

/// Reads `label,mass` CSV (header included) into a distribution, preserving
/// row order.
pub fn read_dist_csv(path: &Path) -> Result<ExplicitDistribution> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut entries: Vec<(Label, f64)> = Vec::new();
    for record in reader.deserialize() {
        let (label, mass): (Label, f64) = record?;
        entries.push((label, mass));
    }
    ExplicitDistribution::new(entries)
}

/// Writes a distribution as `label,mass` CSV with a header row.
pub fn write_dist_csv(path: &Path, d: &ExplicitDistribution) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["label", "mass"])?;
    for &(label, mass) in d.entries() {
        writer.serialize((label, mass))?;
    }
    writer.flush()?;
    Ok(())
}

/// Runs the configured experiment: derives one seed per trial from the master
/// seed, runs trials on a worker pool, emits rows in trial order, and returns
/// summary + rows. A trial that exhausts its budget becomes a flagged row
/// (branch `budget-exceeded`), never an abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dist = parse_dist_spec(&cfg.dist_spec)?;
    let report = match cfg.kind {
        ExperimentKind::Estimate | ExperimentKind::AdviceCheck(_) => {
            let rows: Vec<TrialRow> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| run_trial(cfg, &dist, trial))
                .collect();
            let exact = match cfg.kind {
                ExperimentKind::Estimate => dist.l2_squared(),
                _ => dist.t_coefficient(),
            };
            let summary = summarize_trials(&rows, cfg.kind, cfg.params.eps, exact);
            ExperimentReport {
                summary,
                rows: Rows::Trials(rows),
            }
        }
        ExperimentKind::Lowerbound => run_lowerbound(cfg, &dist)?,
    };
    if let Some(path) = &cfg.out {
        match &report.rows {
            Rows::Trials(rows) => write_rows(path, cfg.format, rows)?,
            Rows::Lowerbound(rows) => write_rows(path, cfg.format, rows)?,
        }
    }
    Ok(report)
}

fn run_trial(cfg: &ExperimentConfig, dist: &ExplicitDistribution, trial: u64) -> TrialRow {
    let seed = derive_seed(cfg.master_seed, trial);
    let mut oracle = SampleOracle::new(dist, seed);
    oracle.set_cap(cfg.params.cap);
    let started = std::time::Instant::now();
    let EstimatorParams {
        eps, eta, scale, ..
    } = cfg.params;
    let outcome: Result<(f64, u64, String)> = match cfg.kind {
        ExperimentKind::Estimate => {
            let result = match cfg.advice_scale {
                None => {
                    estimate_l2_top_level_with(&mut oracle, eps, eta, scale, &mut FaithfulAdvice)
                }
                Some(advice_scale) => estimate_l2_top_level_with(
                    &mut oracle,
                    eps,
                    eta,
                    scale,
                    &mut RescaledAdvice(advice_scale),
                ),
            };
            result.map(|rep| {
                let branch = report_branch(&rep).to_string();
                (rep.value, rep.samples, branch)
            })
        }
        ExperimentKind::AdviceCheck(finder) => {
            let result = match finder {
                AdviceFinder::Small => find_advice_small(&mut oracle, eps, eta, scale),
                AdviceFinder::Medium => find_advice_medium(&mut oracle, eps, eta, scale),
                AdviceFinder::Large => find_advice_large(&mut oracle, eps, eta, scale),
            };
            result.map(|rep| {
                let branch = rep
                    .trace
                    .last()
                    .map(|t| t.proc.to_string())
                    .unwrap_or_default();
                (rep.r, rep.samples, branch)
            })
        }
        ExperimentKind::Lowerbound => unreachable!("handled by run_lowerbound"),
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((value, samples, branch)) => TrialRow {
            trial,
            seed,
            value,
            samples,
            branch,
            wall_ms,
        },
        Err(Error::BudgetExceeded { drawn, .. }) => TrialRow {
            trial,
            seed,
            value: 0.0,
            samples: drawn,
            branch: "budget-exceeded".into(),
            wall_ms,
        },
        Err(e) => TrialRow {
            trial,
            seed,
            value: 0.0,
            samples: 0,
            branch: format!("error:{e}"),
            wall_ms,
        },
    }
}

fn run_lowerbound(cfg: &ExperimentConfig, dist: &ExplicitDistribution) -> Result<ExperimentReport> {
    let eps = cfg.params.eps;
    let mode = if dist.domain_size() <= 40 {
        LambdaMode::Exact
    } else {
        LambdaMode::MonteCarlo {
            trials: 65_536,
            seed: derive_seed(cfg.master_seed, u64::MAX),
        }
    };
    let ensemble = PerturbationEnsemble::new(dist.clone(), eps, mode)?;
    let l2 = dist.l2_squared();
    let band = 2.5 * eps * l2;
    let rows: Vec<LowerboundRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(cfg.master_seed, trial);
            let (_, nu) = ensemble.draw(seed);
            let nu_l2_sq = nu.l2_squared();
            LowerboundRow {
                trial,
                seed,
                lambda: ensemble.lambda(),
                nu_l2_sq,
                deviated: (nu_l2_sq - l2).abs() > band,
            }
        })
        .collect();
    let values: Vec<f64> = rows.iter().map(|r| r.nu_l2_sq).collect();
    let deviations = rows.iter().filter(|r| r.deviated).count() as f64;
    let mut summary = summarize_values(&values, rows.len() as u64, 0);
    summary.exact = Some(l2);
    summary.success_freq = Some(deviations / rows.len() as f64);
    Ok(ExperimentReport {
        summary,
        rows: Rows::Lowerbound(rows),
    })
}

/// Summary over estimate/advice rows; recomputable from emitted rows alone
/// (given kind, eps and the exact functional), which the determinism suite
/// checks for exact equality.
pub fn summarize_trials(
    rows: &[TrialRow],
    kind: ExperimentKind,
    eps: f64,
    exact: f64,
) -> Summary {
    let good: Vec<&TrialRow> = rows
        .iter()
        .filter(|r| !r.branch.starts_with("budget-exceeded") && !r.branch.starts_with("error:"))
        .collect();
    let values: Vec<f64> = good.iter().map(|r| r.value).collect();
    let flagged = (rows.len() - good.len()) as u64;
    let mut summary = summarize_values(&values, rows.len() as u64, flagged);
    let mut samples: Vec<f64> = good.iter().map(|r| r.samples as f64).collect();
    summary.median_samples = quantile(&mut samples, 0.5);
    summary.exact = Some(exact);
    let hits = good
        .iter()
        .filter(|r| match kind {
            ExperimentKind::Estimate => (r.value - exact).abs() <= eps * exact,
            ExperimentKind::AdviceCheck(_) => r.value >= exact - 1e-12,
            ExperimentKind::Lowerbound => unreachable!(),
        })
        .count();
    summary.success_freq = if rows.is_empty() {
        None
    } else {
        Some(hits as f64 / rows.len() as f64)
    };
    summary
}

fn summarize_values(values: &[f64], trials: u64, flagged: u64) -> Summary {
    let n = values.len() as f64;
    let mean = if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / n
    };
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    };
    let mut sorted = values.to_vec();
    Summary {
        trials,
        flagged,
        mean,
        std_err: (var / n.max(1.0)).sqrt(),
        min: quantile(&mut sorted, 0.0),
        q25: quantile(&mut sorted, 0.25),
        median: quantile(&mut sorted, 0.5),
        q75: quantile(&mut sorted, 0.75),
        max: quantile(&mut sorted, 1.0),
        median_samples: f64::NAN,
        exact: None,
        success_freq: None,
    }
}

/// Nearest-rank quantile over a scratch slice (sorted in place).
pub fn quantile(values: &mut [f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * p).round() as usize;
    values[idx]
}

/// Writes rows as CSV (header from field names) or JSONL (one object per
/// row, same keys). Both formats print floats with the same shortest
/// round-trip encoding, so re-parsing reproduces values exactly.
pub fn write_rows<R: Serialize>(path: &Path, format: OutputFormat, rows: &[R]) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)?;
            for row in rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
        }
        OutputFormat::Jsonl => {
            let mut file = std::fs::File::create(path)?;
            for row in rows {
                serde_json::to_writer(&mut file, row).map_err(std::io::Error::other)?;
                file.write_all(b"\n")?;
            }
            file.flush()?;
        }
    }
    Ok(())
}

/// Reads back an estimate/advice row file written by [`write_rows`].
pub fn read_trial_rows(path: &Path, format: OutputFormat) -> Result<Vec<TrialRow>> {
    match format {
        OutputFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)?;
            let mut rows = Vec::new();
            for record in reader.deserialize() {
                rows.push(record?);
            }
            Ok(rows)
        }
        OutputFormat::Jsonl => {
            let text = std::fs::read_to_string(path)?;
            text.lines()
                .map(|line| serde_json::from_str(line).map_err(|e| Error::Io(std::io::Error::other(e))))
                .collect()
        }
    }
}

/// Default output directory: `$COLLNORM_OUT_DIR` or the current directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("COLLNORM_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}
