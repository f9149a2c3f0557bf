//! Command implementations behind the `tenet` binary: run experiments and
//! sweeps, replay and verify traces, compute metrics, export plot data.
//! Everything is non-interactive and deterministic given its inputs.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};

use tenet::config::{Config, Mode};
use tenet::engine::{run, RunOutput, Summary};
use tenet::generation::{LlmGenerator, ScriptedGenerator};
use tenet::metrics;
use tenet::semantic::{Embedder, ExternalEmbedder, HashEmbedder};
use tenet::trace::{self, Trace};
use tenet::transport::HttpTransport;
use tenet::world::{build_world, SyntheticWorld};

/// Load a TOML config, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    let cfg: Config = match path {
        None => Config::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            toml::from_str(&text).map_err(|e| anyhow!("invalid config: {e}"))?
        }
    };
    cfg.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
    Ok(cfg)
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub warm_up: Option<usize>,
    pub theta: Option<f64>,
    pub count_threshold: Option<usize>,
    pub adaptive: Option<bool>,
    /// Observation noise standard deviation; stored squared as the variance.
    pub sigma: Option<f64>,
    pub confidence: Option<f64>,
    pub bald_samples: Option<usize>,
    pub proposals: Option<usize>,
    pub mode: Option<String>,
    pub include_true: Option<bool>,
    pub clusters: Option<usize>,
    pub hypotheses_per_cluster: Option<usize>,
}

pub fn apply_overrides(cfg: &mut Config, o: &Overrides) -> anyhow::Result<()> {
    if let Some(v) = o.seed {
        cfg.run.seed = v;
    }
    if let Some(v) = o.budget {
        cfg.run.budget = v;
    }
    if let Some(v) = o.warm_up {
        cfg.run.warm_up_rounds = v;
    }
    if let Some(v) = o.theta {
        cfg.run.theta = v;
    }
    if let Some(v) = o.count_threshold {
        cfg.run.count_threshold = v;
    }
    if let Some(v) = o.adaptive {
        cfg.run.adaptive_theta = v;
    }
    if let Some(v) = o.sigma {
        cfg.run.obs_noise_variance = v * v;
    }
    if let Some(v) = o.confidence {
        cfg.run.confidence_threshold = v;
    }
    if let Some(v) = o.bald_samples {
        cfg.run.bald_samples = v;
    }
    if let Some(v) = o.proposals {
        cfg.run.proposals_per_round = v;
    }
    if let Some(m) = &o.mode {
        cfg.run.mode = m.parse::<Mode>().map_err(|e| anyhow!("{e}"))?;
    }
    if let Some(v) = o.include_true {
        cfg.run.include_true_principle = v;
    }
    if let Some(v) = o.clusters {
        cfg.world.clusters = v;
    }
    if let Some(v) = o.hypotheses_per_cluster {
        cfg.world.hypotheses_per_cluster = v;
    }
    cfg.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
    Ok(())
}

/// Run the engine for a config, in memory. The scripted backend needs no
/// network; the llm backend goes through HTTP with the key from the
/// configured environment variable.
pub fn execute_run(config: &Config) -> anyhow::Result<RunOutput> {
    let world = build_world(&config.world_spec())?;
    execute_run_in(config, &world)
}

pub fn execute_run_in(config: &Config, world: &SyntheticWorld) -> anyhow::Result<RunOutput> {
    let transport = HttpTransport::new();
    let embedder = match config.embedder.backend.as_str() {
        "hash" => Embedder::Hash(HashEmbedder::new(
            config.run.seed,
            config.embedder.dimension,
        )),
        "external" => Embedder::External(ExternalEmbedder {
            transport: &transport,
            endpoint: config.embedder.endpoint.clone(),
            model: config.embedder.model.clone(),
            api_key: std::env::var(&config.embedder.api_key_env).ok(),
            retries: config.embedder.retries,
        }),
        other => bail!("unknown embedder backend '{other}'"),
    };
    let out = match config.generator.backend.as_str() {
        "scripted" => {
            let mut generator = ScriptedGenerator::new(world, config.run.seed);
            run(config, world, &mut generator, &embedder)?
        }
        "llm" => {
            let mut generator = LlmGenerator::new(config.generator.llm.clone(), &transport);
            run(config, world, &mut generator, &embedder)?
        }
        other => bail!("unknown generator backend '{other}'"),
    };
    Ok(out)
}

/// Write trace, summary, and world next to each other.
pub fn write_outputs(out: &RunOutput, world: &SyntheticWorld, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    trace::write_to_path(&out.trace, &dir.join("trace.jsonl"))?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&out.summary)?,
    )?;
    std::fs::write(dir.join("world.json"), world.to_json()?)?;
    Ok(())
}

pub fn cmd_run(config: &Config, out_dir: &Path) -> anyhow::Result<Summary> {
    let world = build_world(&config.world_spec())?;
    let out = execute_run_in(config, &world)?;
    write_outputs(&out, &world, out_dir)?;
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    Ok(out.summary)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub const SWEEP_AXES: [&str; 5] = ["theta", "count_threshold", "sigma", "warm_up", "mode"];

fn apply_axis(cfg: &mut Config, axis: &str, value: &str) -> anyhow::Result<()> {
    match axis {
        "theta" => cfg.run.theta = value.parse()?,
        "count_threshold" => cfg.run.count_threshold = value.parse()?,
        "sigma" => {
            let s: f64 = value.parse()?;
            cfg.run.obs_noise_variance = s * s;
        }
        "warm_up" => cfg.run.warm_up_rounds = value.parse()?,
        "mode" => cfg.run.mode = value.parse::<Mode>().map_err(|e| anyhow!("{e}"))?,
        other => bail!("unknown sweep axis '{other}' (expected one of {SWEEP_AXES:?})"),
    }
    cfg.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
    Ok(())
}

/// One trace per (value, seed) plus an aggregate CSV of per-value medians.
pub fn cmd_sweep(
    base: &Config,
    axis: &str,
    values: &[String],
    seeds: &[u64],
    jobs: usize,
    out_dir: &Path,
) -> anyhow::Result<PathBuf> {
    if values.is_empty() || seeds.is_empty() {
        bail!("sweep needs at least one value and one seed");
    }
    std::fs::create_dir_all(out_dir)?;

    struct Task {
        value: String,
        seed: u64,
        config: Config,
        dir: PathBuf,
    }
    let mut tasks = VecDeque::new();
    for value in values {
        for &seed in seeds {
            let mut cfg = base.clone();
            apply_axis(&mut cfg, axis, value)?;
            cfg.run.seed = seed;
            let dir = out_dir
                .join(format!("{axis}-{value}"))
                .join(format!("seed-{seed}"));
            tasks.push_back(Task {
                value: value.clone(),
                seed,
                config: cfg,
                dir,
            });
        }
    }

    let queue = Mutex::new(tasks);
    let results: Mutex<Vec<(String, u64, Summary)>> = Mutex::new(Vec::new());
    let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(|| loop {
                let task = match queue.lock().unwrap().pop_front() {
                    Some(t) => t,
                    None => break,
                };
                match (|| -> anyhow::Result<Summary> {
                    let world = build_world(&task.config.world_spec())?;
                    let out = execute_run_in(&task.config, &world)?;
                    write_outputs(&out, &world, &task.dir)?;
                    Ok(out.summary)
                })() {
                    Ok(summary) => {
                        results
                            .lock()
                            .unwrap()
                            .push((task.value.clone(), task.seed, summary))
                    }
                    Err(e) => errors
                        .lock()
                        .unwrap()
                        .push(format!("{axis}={} seed={}: {e}", task.value, task.seed)),
                }
            });
        }
    });
    let errors = errors.into_inner().unwrap();
    if !errors.is_empty() {
        bail!("sweep failures:\n{}", errors.join("\n"));
    }
    let results = results.into_inner().unwrap();

    let mut csv = String::from(
        "axis,value,seeds,median_sq,median_auoc,median_apd,median_augmentations,median_regret_coefficient,median_regret_alpha,discovery_finite\n",
    );
    for value in values {
        let rows: Vec<&(String, u64, Summary)> =
            results.iter().filter(|(v, _, _)| v == value).collect();
        let mut sq: Vec<f64> = rows.iter().map(|(_, _, s)| s.sq_percent).collect();
        let mut au: Vec<f64> = rows.iter().map(|(_, _, s)| s.auoc_percent).collect();
        let mut apd: Vec<f64> = rows.iter().filter_map(|(_, _, s)| s.apd).collect();
        let mut aug: Vec<f64> = rows
            .iter()
            .map(|(_, _, s)| s.augmentations as f64)
            .collect();
        let mut rc: Vec<f64> = rows.iter().map(|(_, _, s)| s.regret_coefficient).collect();
        let mut ra: Vec<f64> = rows.iter().map(|(_, _, s)| s.regret_alpha).collect();
        let finite = rows
            .iter()
            .filter(|(_, _, s)| s.discovery_round.is_some())
            .count();
        csv.push_str(&format!(
            "{axis},{value},{},{},{},{},{},{},{},{}\n",
            rows.len(),
            median(&mut sq).unwrap_or(f64::NAN),
            median(&mut au).unwrap_or(f64::NAN),
            median(&mut apd).map(|v| v.to_string()).unwrap_or_default(),
            median(&mut aug).unwrap_or(f64::NAN),
            median(&mut rc).unwrap_or(f64::NAN),
            median(&mut ra).unwrap_or(f64::NAN),
            finite,
        ));
    }
    let agg = out_dir.join("aggregate.csv");
    std::fs::write(&agg, csv)?;
    Ok(agg)
}

pub fn read_trace(path: &Path) -> anyhow::Result<Trace> {
    Ok(trace::read_from_path(path)?)
}

/// Recompute every belief snapshot from the recorded observations; exit
/// cleanly iff all match. Config-hash drift is a warning, not a failure.
pub fn cmd_replay(trace_path: &Path) -> anyhow::Result<()> {
    let t = read_trace(trace_path)?;
    for w in trace::verify_structure(&t)? {
        eprintln!("warning: {w}");
    }
    trace::replay(&t)?;
    println!(
        "replay ok: {} rounds verified ({})",
        t.rounds.len(),
        trace_path.display()
    );
    Ok(())
}

/// Structural verification: hashes, round numbering, normalization, score
/// consistency, and world reconstruction.
pub fn cmd_verify(trace_path: &Path) -> anyhow::Result<()> {
    let t = read_trace(trace_path)?;
    for w in trace::verify_structure(&t)? {
        eprintln!("warning: {w}");
    }
    let world = build_world(&t.header.config.world_spec())?;
    let rebuilt = trace::world_hash(&world)?;
    if rebuilt != t.header.world_hash {
        bail!(
            "world hash mismatch: trace has {}, config rebuilds {}",
            &t.header.world_hash[..12],
            &rebuilt[..12]
        );
    }
    println!("verify ok: {} rounds, hashes consistent", t.rounds.len());
    Ok(())
}

pub fn cmd_metrics(
    trace_path: &Path,
    mu_ref: Option<f64>,
    preset: Option<&str>,
) -> anyhow::Result<String> {
    let t = read_trace(trace_path)?;
    let mu = match (mu_ref, preset) {
        (Some(v), _) => Some(v),
        (None, Some(p)) => Some(
            metrics::mu_ref_preset(p)
                .ok_or_else(|| anyhow!("unknown preset '{p}' (nho|mbo|spo|tmc)"))?,
        ),
        (None, None) => None,
    };
    let report = metrics::report(&t, mu, metrics::DEFAULT_DISCOVERY_DOT)?;
    Ok(serde_json::to_string_pretty(&report)?)
}

pub fn cmd_export(trace_path: &Path, out: &Path) -> anyhow::Result<()> {
    let t = read_trace(trace_path)?;
    std::fs::write(out, metrics::series_csv(&t)?)?;
    Ok(())
}

/// Parse "0..20" (half-open) or "1,2,3" into a seed list.
pub fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a.trim().parse()?;
        let hi: u64 = b.trim().parse()?;
        if hi <= lo {
            bail!("empty seed range {spec}");
        }
        Ok((lo..hi).collect())
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(Into::into))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs_parse() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5,9").unwrap(), vec![5, 9]);
        assert!(parse_seeds("3..3").is_err());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = Config::default();
        let o = Overrides {
            sigma: Some(0.1),
            mode: Some("greedy-only".into()),
            ..Overrides::default()
        };
        apply_overrides(&mut cfg, &o).unwrap();
        assert!((cfg.run.obs_noise_variance - 0.01).abs() < 1e-15);
        assert_eq!(cfg.run.mode, Mode::GreedyOnly);

        let mut cfg2 = Config::default();
        let bad = Overrides {
            warm_up: Some(999),
            ..Overrides::default()
        };
        assert!(apply_overrides(&mut cfg2, &bad).is_err());
    }
}
