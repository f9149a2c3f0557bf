use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tenet_cli::{
    apply_overrides, cmd_export, cmd_metrics, cmd_replay, cmd_run, cmd_sweep, cmd_verify,
    load_config, parse_seeds, Overrides,
};

#[derive(Parser)]
#[command(
    name = "tenet",
    about = "Principle-evolution Bayesian optimization engine over synthetic discovery worlds",
    long_about = "Runs a budgeted discovery loop: GP experts over semantic pair features, \
                  information-directed hypothesis selection, anomaly-driven principle-space \
                  augmentation. For the llm generator or external embedder backends, the API \
                  key is read from the environment variable named in the config \
                  (default TENET_API_KEY)."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct OverrideFlags {
    /// Master seed; every randomness source derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment budget T.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    warm_up: Option<usize>,
    /// Anomaly threshold in (0, 1).
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    count_threshold: Option<usize>,
    /// Trailing-percentile anomaly threshold instead of the fixed theta.
    #[arg(long)]
    adaptive: Option<bool>,
    /// Observation noise standard deviation (stored squared).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    bald_samples: Option<usize>,
    #[arg(long)]
    proposals: Option<usize>,
    /// full | greedy-only | static-evolution
    #[arg(long)]
    mode: Option<String>,
    /// Include the true principle in the initial working set.
    #[arg(long)]
    include_true: Option<bool>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    hypotheses_per_cluster: Option<usize>,
}

impl From<&OverrideFlags> for Overrides {
    fn from(f: &OverrideFlags) -> Self {
        Overrides {
            seed: f.seed,
            budget: f.budget,
            warm_up: f.warm_up,
            theta: f.theta,
            count_threshold: f.count_threshold,
            adaptive: f.adaptive,
            sigma: f.sigma,
            confidence: f.confidence,
            bald_samples: f.bald_samples,
            proposals: f.proposals,
            mode: f.mode.clone(),
            include_true: f.include_true,
            clusters: f.clusters,
            hypotheses_per_cluster: f.hypotheses_per_cluster,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment; writes trace.jsonl, summary.json, world.json.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        flags: OverrideFlags,
    },
    /// Sweep one axis over values x seeds; writes per-run outputs and an
    /// aggregate CSV of medians.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// theta | count_threshold | sigma | warm_up | mode
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Seeds as "0..20" or "1,2,3".
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
        #[command(flatten)]
        flags: OverrideFlags,
    },
    /// Recompute belief snapshots from recorded observations; nonzero exit
    /// on the first divergent round.
    Replay { trace: PathBuf },
    /// Structural checks: hashes, numbering, normalization, score identity.
    Verify { trace: PathBuf },
    /// Metric report (JSON) for a trace. mu_ref defaults to the recorded
    /// world optimum; presets: nho | mbo | spo | tmc.
    Metrics {
        trace: PathBuf,
        #[arg(long)]
        mu_ref: Option<f64>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Flat CSV series (round, outcome, best-so-far, regret, entropy, MAP mass).
    Export {
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> anyhow::Result<()> {
        match &cli.cmd {
            Cmd::Run { config, out, flags } => {
                let mut cfg = load_config(config.as_deref())?;
                apply_overrides(&mut cfg, &Overrides::from(flags))?;
                cmd_run(&cfg, out)?;
            }
            Cmd::Sweep {
                config,
                axis,
                values,
                seeds,
                jobs,
                out,
                flags,
            } => {
                let mut cfg = load_config(config.as_deref())?;
                apply_overrides(&mut cfg, &Overrides::from(flags))?;
                let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
                let seeds = parse_seeds(seeds)?;
                let agg = cmd_sweep(&cfg, axis, &values, &seeds, *jobs, out)?;
                println!("aggregate written to {}", agg.display());
            }
            Cmd::Replay { trace } => cmd_replay(trace)?,
            Cmd::Verify { trace } => cmd_verify(trace)?,
            Cmd::Metrics {
                trace,
                mu_ref,
                preset,
            } => {
                let json = cmd_metrics(trace, *mu_ref, preset.as_deref())?;
                println!("{json}");
            }
            Cmd::Export { trace, out } => cmd_export(trace, out)?,
        }
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
