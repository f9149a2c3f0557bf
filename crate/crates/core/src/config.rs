//! Run configuration. Loaded from a structured config file by the CLI;
//! every knob here is overridable from the command line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::LlmConfig;
use crate::world::WorldSpec;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// IDS selection with anomaly-driven augmentation.
    Full,
    /// Selection by posterior-mixture mean only; augmentation stays on.
    GreedyOnly,
    /// Augmentation disabled; the working set never grows.
    StaticEvolution,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "greedy-only" | "greedy" => Ok(Mode::GreedyOnly),
            "static-evolution" | "static" => Ok(Mode::StaticEvolution),
            other => Err(Error::validation(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::GreedyOnly => "greedy-only",
            Mode::StaticEvolution => "static-evolution",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Experiment budget T.
    pub budget: usize,
    pub warm_up_rounds: usize,
    /// Anomaly threshold theta in (0, 1).
    pub theta: Real,
    pub count_threshold: usize,
    /// Use a trailing-window percentile threshold instead of the fixed theta.
    pub adaptive_theta: bool,
    pub obs_noise_variance: Real,
    /// MAP-mass cutoff separating exploit/refine from explore/discover.
    pub confidence_threshold: Real,
    /// BALD Monte-Carlo sample count M.
    pub bald_samples: usize,
    pub epsilon_floor: Real,
    /// Hypotheses requested per round.
    pub proposals_per_round: usize,
    pub seed: u64,
    pub mode: Mode,
    pub task_context: String,
    /// Seed the working set with these texts; empty means "use the world's
    /// latent principles", honoring `include_true_principle`.
    pub initial_principles: Vec<String>,
    pub include_true_principle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: 24,
            warm_up_rounds: 5,
            theta: 0.8,
            count_threshold: 3,
            adaptive_theta: false,
            obs_noise_variance: 0.0025,
            confidence_threshold: 0.5,
            bald_samples: 64,
            epsilon_floor: 1e-9,
            proposals_per_round: 3,
            seed: 0,
            mode: Mode::Full,
            task_context: "Maximize the outcome of the synthetic discovery world".to_string(),
            initial_principles: Vec::new(),
            include_true_principle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    /// "hash" or "external".
    pub backend: String,
    pub dimension: usize,
    pub model: String,
    pub endpoint: String,
    /// Environment variable holding the API key for the external backend.
    pub api_key_env: String,
    pub retries: u32,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            backend: "hash".to_string(),
            dimension: crate::semantic::DEFAULT_EMBED_DIM,
            model: String::new(),
            endpoint: String::new(),
            api_key_env: "TENET_API_KEY".to_string(),
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// "scripted" or "llm".
    pub backend: String,
    pub llm: LlmConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            backend: "scripted".to_string(),
            llm: LlmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunConfig,
    pub world: WorldSpec,
    pub embedder: EmbedderConfig,
    pub generator: GeneratorConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.budget < 1 {
            return Err(Error::validation("run.budget must be >= 1"));
        }
        if r.warm_up_rounds >= r.budget {
            return Err(Error::validation("run.warm_up_rounds must be < run.budget"));
        }
        if !(r.theta > 0.0 && r.theta < 1.0) {
            return Err(Error::validation("run.theta must lie in (0, 1)"));
        }
        if !(r.confidence_threshold > 0.0 && r.confidence_threshold < 1.0) {
            return Err(Error::validation(
                "run.confidence_threshold must lie in (0, 1)",
            ));
        }
        if r.obs_noise_variance <= 0.0 {
            return Err(Error::validation("run.obs_noise_variance must be > 0"));
        }
        if r.bald_samples == 0 {
            return Err(Error::validation("run.bald_samples must be >= 1"));
        }
        if r.epsilon_floor <= 0.0 {
            return Err(Error::validation("run.epsilon_floor must be > 0"));
        }
        if r.proposals_per_round == 0 {
            return Err(Error::validation("run.proposals_per_round must be >= 1"));
        }
        if r.count_threshold == 0 {
            return Err(Error::validation("run.count_threshold must be >= 1"));
        }
        if self.world.clusters < 2 {
            return Err(Error::validation("world.clusters must be >= 2"));
        }
        if self.embedder.dimension < 2 {
            return Err(Error::validation("embedder.dimension must be >= 2"));
        }
        match self.embedder.backend.as_str() {
            "hash" | "external" => {}
            other => {
                return Err(Error::validation(format!(
                    "embedder.backend must be 'hash' or 'external', got '{other}'"
                )))
            }
        }
        match self.generator.backend.as_str() {
            "scripted" | "llm" => {}
            other => {
                return Err(Error::validation(format!(
                    "generator.backend must be 'scripted' or 'llm', got '{other}'"
                )))
            }
        }
        Ok(())
    }

    /// The effective world spec: world randomness flows from the run seed
    /// through the "world" sub-stream.
    pub fn world_spec(&self) -> WorldSpec {
        let mut spec = self.world.clone();
        spec.seed = crate::rng::derive_seed(self.run.seed, "world", &[]);
        spec.dim = self.embedder.dimension;
        spec
    }
}
