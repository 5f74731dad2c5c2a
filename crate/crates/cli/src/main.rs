//! `collnorm` — collision-norm estimation experiments from the command line.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use collnorm::harness::{
    default_out_dir, parse_dist_spec, run_experiment, AdviceFinder, ExperimentConfig,
    ExperimentKind, OutputFormat, Rows, Summary,
};
use collnorm::report::EstimatorParams;
use collnorm::{zoo, SampleOracle};

#[derive(Parser)]
#[command(
    name = "collnorm",
    about = "Estimate the collision norm of a distribution from samples; run advice and lower-bound experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonParams {
    /// Distribution spec: `name:key=value,...` or `@file.csv`
    #[arg(long)]
    dist: String,
    /// Multiplicative accuracy target
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Error probability
    #[arg(long, default_value_t = 1.0 / 3.0)]
    eta: f64,
    /// Multiplier on every hard-coded sample-count constant (1 = faithful)
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Master seed; per-trial seeds are derived from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-trial sample budget; exceeding it flags the trial
    #[arg(long)]
    cap: Option<u64>,
}

impl CommonParams {
    fn estimator_params(&self) -> Result<EstimatorParams> {
        EstimatorParams::new(self.eps, self.eta, self.scale, self.cap)
            .context("invalid estimator parameters")
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the top-level unbiased estimator once and print value, samples, branch
    Estimate {
        #[command(flatten)]
        common: CommonParams,
        /// Run the advice stage at its own scale instead of the pipeline's
        #[arg(long)]
        advice_scale: Option<f64>,
        /// Emit the result as one JSON object
        #[arg(long)]
        json: bool,
    },
    /// Run many estimator trials and summarize cost and accuracy
    Bench {
        #[command(flatten)]
        common: CommonParams,
        #[arg(long)]
        advice_scale: Option<f64>,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        /// Output rows file (default: stdout summary only)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format, default_value = "csv")]
        format: OutputFormat,
    },
    /// Run an advice finder repeatedly and check dominance over the exact t
    AdviceCheck {
        #[command(flatten)]
        common: CommonParams,
        /// Which finder: small | medium | large
        #[arg(long)]
        finder: String,
        #[arg(long, default_value_t = 500)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format, default_value = "csv")]
        format: OutputFormat,
    },
    /// Draw hard-instance perturbations and record norm deviations
    Lowerbound {
        #[command(flatten)]
        common: CommonParams,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Output CSV/JSONL of per-trial rows (seed, λ, ‖ν‖₂², deviation flag)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format, default_value = "csv")]
        format: OutputFormat,
    },
    /// Zoo utilities
    Zoo {
        #[command(subcommand)]
        command: ZooCommand,
    },
}

#[derive(Subcommand)]
enum ZooCommand {
    /// List the named distribution families
    List,
    /// Print exact functionals of a distribution spec
    Describe {
        #[arg(long)]
        dist: String,
    },
    /// Export a distribution spec as `label,mass` CSV
    Export {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "jsonl" => Ok(OutputFormat::Jsonl),
        other => Err(format!("unknown format `{other}` (csv|jsonl)")),
    }
}

fn resolve_out(path: Option<PathBuf>) -> Option<PathBuf> {
    path.map(|p| {
        if p.is_absolute() || p.parent().map_or(false, |d| !d.as_os_str().is_empty()) {
            p
        } else {
            default_out_dir().join(p)
        }
    })
}

fn print_summary(summary: &Summary) {
    println!("trials          {}", summary.trials);
    if summary.flagged > 0 {
        println!("flagged         {}", summary.flagged);
    }
    println!("mean            {}", summary.mean);
    println!("std_err         {}", summary.std_err);
    println!(
        "quantiles       min={} q25={} median={} q75={} max={}",
        summary.min, summary.q25, summary.median, summary.q75, summary.max
    );
    if !summary.median_samples.is_nan() {
        println!("median_samples  {}", summary.median_samples);
    }
    if let Some(exact) = summary.exact {
        println!("exact           {exact}");
    }
    if let Some(freq) = summary.success_freq {
        println!("success_freq    {freq}");
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Estimate {
            common,
            advice_scale,
            json,
        } => {
            let params = common.estimator_params()?;
            let dist = parse_dist_spec(&common.dist)?;
            let mut oracle = SampleOracle::new(&dist, common.seed);
            oracle.set_cap(params.cap);
            let report = match advice_scale {
                None => collnorm::toplevel::estimate_l2_top_level(
                    &mut oracle,
                    params.eps,
                    params.eta,
                    params.scale,
                )?,
                Some(advice_scale) => collnorm::toplevel::estimate_l2_top_level_with(
                    &mut oracle,
                    params.eps,
                    params.eta,
                    params.scale,
                    &mut collnorm::toplevel::RescaledAdvice(advice_scale),
                )?,
            };
            let branch = collnorm::toplevel::report_branch(&report).to_string();
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "value": report.value,
                        "samples": report.samples,
                        "branch": branch,
                        "exact": dist.l2_squared(),
                        "seed": common.seed,
                    })
                );
            } else {
                println!("value    {}", report.value);
                println!("samples  {}", report.samples);
                println!("branch   {branch}");
                println!("exact    {}", dist.l2_squared());
            }
        }
        Command::Bench {
            common,
            advice_scale,
            trials,
            out,
            format,
        } => {
            let cfg = ExperimentConfig {
                kind: ExperimentKind::Estimate,
                dist_spec: common.dist.clone(),
                params: common.estimator_params()?,
                advice_scale,
                trials,
                master_seed: common.seed,
                out: resolve_out(out),
                format,
            };
            let report = run_experiment(&cfg)?;
            print_summary(&report.summary);
        }
        Command::AdviceCheck {
            common,
            finder,
            trials,
            out,
            format,
        } => {
            let finder = match finder.as_str() {
                "small" => AdviceFinder::Small,
                "medium" => AdviceFinder::Medium,
                "large" => AdviceFinder::Large,
                other => bail!("unknown finder `{other}` (small|medium|large)"),
            };
            let cfg = ExperimentConfig {
                kind: ExperimentKind::AdviceCheck(finder),
                dist_spec: common.dist.clone(),
                params: common.estimator_params()?,
                advice_scale: None,
                trials,
                master_seed: common.seed,
                out: resolve_out(out),
                format,
            };
            let report = run_experiment(&cfg)?;
            print_summary(&report.summary);
        }
        Command::Lowerbound {
            common,
            trials,
            out,
            format,
        } => {
            let cfg = ExperimentConfig {
                kind: ExperimentKind::Lowerbound,
                dist_spec: common.dist.clone(),
                params: common.estimator_params()?,
                advice_scale: None,
                trials,
                master_seed: common.seed,
                out: resolve_out(out),
                format,
            };
            let report = run_experiment(&cfg)?;
            print_summary(&report.summary);
            if let Rows::Lowerbound(rows) = &report.rows {
                if let Some(first) = rows.first() {
                    println!("lambda          {}", first.lambda);
                }
            }
        }
        Command::Zoo { command } => match command {
            ZooCommand::List => {
                for (name, usage) in zoo::catalog() {
                    println!("{name:<16} {usage}");
                }
            }
            ZooCommand::Describe { dist } => {
                let d = parse_dist_spec(&dist)?;
                println!("domain_size  {}", d.domain_size());
                println!("l2_squared   {}", d.l2_squared());
                println!("l3_cubed     {}", d.l3_cubed());
                println!("t            {}", d.t_coefficient());
                println!("max_mass     {}", d.max_mass());
                println!(
                    "friendly     {}",
                    collnorm::finite::is_friendly(&d)
                );
            }
            ZooCommand::Export { dist, out } => {
                let d = parse_dist_spec(&dist)?;
                collnorm::harness::write_dist_csv(&out, &d)?;
                println!("wrote {}", out.display());
            }
        },
    }
    Ok(())
}
