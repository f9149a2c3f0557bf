//! Trace format: a JSONL stream with one header line and one round record
//! per line, plus deterministic replay of belief snapshots.
//!
//! The trace is self-contained: principle and hypothesis embeddings ride
//! along with the records, so replay needs neither the config's embedder nor
//! the world, and drift in either is detectable.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomaly::AnomalyRecord;
use crate::beliefs::{
    update_posterior, BeliefState, ExpertSet, Hypothesis, HypothesisId, HypothesisStore,
    Observation, Principle, PrincipleId, PrincipleRegistry,
};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::gp::{GpExpert, KernelParams};
use crate::ids::CandidateScore;
use crate::semantic::{pair_features, UnitVector};
use crate::world::SyntheticWorld;
use crate::Real;

pub const TRACE_FORMAT: &str = "tenet-trace";
pub const TRACE_VERSION: u32 = 1;

/// Ground-truth digest of the world, carried so trace analytics work without
/// the world file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub v_star: Real,
    pub best_hypothesis_id: HypothesisId,
    pub true_center: UnitVector<Real>,
    pub latent_count: usize,
    pub universe_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub config: Config,
    pub config_hash: String,
    pub world_hash: String,
    pub world_summary: WorldSummary,
    pub initial_principles: Vec<Principle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub hypothesis_id: HypothesisId,
    pub text: String,
    pub embedding: UnitVector<Real>,
    pub outcome: Real,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySnapshot {
    pub threshold: Real,
    pub triggered: bool,
    pub records: Vec<AnomalyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub principle_directive: String,
    pub hypothesis_directive: String,
    pub principle_added: Option<Principle>,
    pub generation_error: Option<String>,
    pub anomalies: AnomalySnapshot,
    pub scores: Vec<CandidateScore>,
    pub selected: HypothesisId,
    pub observation: ObservationRecord,
    /// Posterior computed in this round's full-history update phase.
    pub beliefs: BeliefState,
    /// Hyperparameters of the experts used for this round's posterior,
    /// in working-set order (standardized-outcome units).
    pub expert_params: Vec<(PrincipleId, KernelParams<Real>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub rounds: Vec<RoundTrace>,
}

pub fn config_hash(config: &Config) -> Result<String> {
    let canon = serde_json::to_string(config)?;
    Ok(hex_digest(&canon))
}

pub fn world_hash(world: &SyntheticWorld) -> Result<String> {
    let canon = serde_json::to_string(world)?;
    Ok(hex_digest(&canon))
}

fn hex_digest(s: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(s.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_jsonl(trace: &Trace, mut w: impl Write) -> Result<()> {
    serde_json::to_writer(&mut w, &trace.header)?;
    w.write_all(b"\n")?;
    for round in &trace.rounds {
        serde_json::to_writer(&mut w, round)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead) -> Result<Trace> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::TraceFormat("empty trace file".into()))??;
    let header: TraceHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::TraceFormat(format!("bad header: {e}")))?;
    if header.format != TRACE_FORMAT {
        return Err(Error::TraceFormat(format!(
            "unknown trace format '{}'",
            header.format
        )));
    }
    let mut rounds = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let round: RoundTrace = serde_json::from_str(&line)
            .map_err(|e| Error::TraceFormat(format!("bad round record {i}: {e}")))?;
        rounds.push(round);
    }
    Ok(Trace { header, rounds })
}

pub fn write_to_path(trace: &Trace, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_jsonl(trace, std::io::BufWriter::new(file))
}

pub fn read_from_path(path: &std::path::Path) -> Result<Trace> {
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file))
}

/// The working set as of round `r` (initial principles plus everything
/// added at rounds <= r).
pub fn principles_at(trace: &Trace, round: usize) -> Result<PrincipleRegistry> {
    let mut reg = PrincipleRegistry::new();
    for p in &trace.header.initial_principles {
        reg.add(p.clone())?;
    }
    for rt in &trace.rounds {
        if rt.round > round {
            break;
        }
        if let Some(p) = &rt.principle_added {
            reg.add(p.clone())?;
        }
    }
    Ok(reg)
}

fn hypothesis_store_from(trace: &Trace) -> HypothesisStore {
    let mut store = HypothesisStore::default();
    for rt in &trace.rounds {
        store.insert(Hypothesis {
            id: rt.observation.hypothesis_id.clone(),
            text: rt.observation.text.clone(),
            embedding: rt.observation.embedding.clone(),
        });
    }
    store
}

fn history_before(trace: &Trace, round: usize) -> Vec<Observation> {
    trace
        .rounds
        .iter()
        .take_while(|rt| rt.round < round)
        .map(|rt| Observation {
            hypothesis_id: rt.observation.hypothesis_id.clone(),
            outcome: rt.observation.outcome,
            round: rt.round,
            failed: rt.observation.failed,
        })
        .collect()
}

const REPLAY_MASS_TOL: Real = 1e-12;

/// Recompute every belief snapshot from the recorded observations and the
/// recorded expert hyperparameters; error on the first divergent round.
pub fn replay(trace: &Trace) -> Result<()> {
    let store = hypothesis_store_from(trace);
    let obs_noise = trace.header.config.run.obs_noise_variance;
    for rt in &trace.rounds {
        let registry = principles_at(trace, rt.round)?;
        let history = history_before(trace, rt.round);
        let mut experts = ExpertSet::new();
        for principle in registry.iter() {
            let params = rt
                .expert_params
                .iter()
                .find(|(pid, _)| pid == &principle.id)
                .map(|(_, p)| *p)
                .ok_or_else(|| Error::Replay {
                    round: rt.round,
                    message: format!("missing expert params for {}", principle.id),
                })?;
            let training: Vec<_> = history
                .iter()
                .map(|o| {
                    let h = store.require(&o.hypothesis_id)?;
                    Ok((
                        pair_features(&h.embedding, &principle.embedding)?,
                        o.outcome,
                    ))
                })
                .collect::<Result<_>>()?;
            let expert =
                GpExpert::fit_with_params(&training, params).map_err(|e| Error::Replay {
                    round: rt.round,
                    message: format!("expert refit failed: {e}"),
                })?;
            experts.insert(principle.id.clone(), expert);
        }
        let recomputed = update_posterior(
            &registry, &experts, &history, &store, obs_noise, rt.round,
        )
        .map_err(|e| Error::Replay {
            round: rt.round,
            message: format!("posterior recompute failed: {e}"),
        })?;
        compare_beliefs(&recomputed, &rt.beliefs, rt.round)?;
    }
    Ok(())
}

fn compare_beliefs(a: &BeliefState, b: &BeliefState, round: usize) -> Result<()> {
    if a.masses.len() != b.masses.len() {
        return Err(Error::Replay {
            round,
            message: format!(
                "working-set size mismatch: {} vs {}",
                a.masses.len(),
                b.masses.len()
            ),
        });
    }
    for (x, y) in a.masses.iter().zip(&b.masses) {
        if x.principle_id != y.principle_id {
            return Err(Error::Replay {
                round,
                message: format!(
                    "principle order mismatch: {} vs {}",
                    x.principle_id, y.principle_id
                ),
            });
        }
        if (x.mass - y.mass).abs() > REPLAY_MASS_TOL {
            return Err(Error::Replay {
                round,
                message: format!(
                    "mass mismatch for {}: recomputed {} vs recorded {}",
                    x.principle_id, x.mass, y.mass
                ),
            });
        }
    }
    if (a.entropy - b.entropy).abs() > 1e-9 {
        return Err(Error::Replay {
            round,
            message: format!("entropy mismatch: {} vs {}", a.entropy, b.entropy),
        });
    }
    Ok(())
}

/// Structural checks that need no recomputation of experts: hashes, round
/// numbering, mass normalization, score-table consistency.
pub fn verify_structure(trace: &Trace) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    let recomputed = config_hash(&trace.header.config)?;
    if recomputed != trace.header.config_hash {
        warnings.push(format!(
            "config hash mismatch (recorded {}, recomputed {}): trace from an older config",
            &trace.header.config_hash[..12.min(trace.header.config_hash.len())],
            &recomputed[..12]
        ));
    }
    let eps = trace.header.config.run.epsilon_floor;
    for (i, rt) in trace.rounds.iter().enumerate() {
        if rt.round != i {
            return Err(Error::TraceFormat(format!(
                "round numbering broken at record {i} (round {})",
                rt.round
            )));
        }
        if rt.beliefs.round != rt.round {
            return Err(Error::TraceFormat(format!(
                "belief snapshot round {} inside round {}",
                rt.beliefs.round, rt.round
            )));
        }
        let total: Real = rt.beliefs.masses.iter().map(|e| e.mass).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::TraceFormat(format!(
                "round {}: masses sum to {total}",
                rt.round
            )));
        }
        if !rt.scores.iter().any(|s| s.hypothesis_id == rt.selected) {
            return Err(Error::TraceFormat(format!(
                "round {}: selected hypothesis missing from score table",
                rt.round
            )));
        }
        for s in &rt.scores {
            let expect = s.regret * s.regret / (s.info_gain + eps);
            if (s.ratio - expect).abs() > 1e-9 * expect.max(1.0) {
                return Err(Error::TraceFormat(format!(
                    "round {}: ratio breaks the regret/info identity for {}",
                    rt.round, s.hypothesis_id
                )));
            }
        }
        for a in &rt.anomalies.records {
            if a.round >= rt.round {
                return Err(Error::TraceFormat(format!(
                    "round {}: anomaly record from round {} (in-flight observation leaked)",
                    rt.round, a.round
                )));
            }
        }
        if rt.observation.hypothesis_id != rt.selected {
            return Err(Error::TraceFormat(format!(
                "round {}: observation does not match selection",
                rt.round
            )));
        }
    }
    Ok(warnings)
}
