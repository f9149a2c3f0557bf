//! The four-phase round loop: anomaly detection and coherent augmentation,
//! full-history posterior update, hypothesis selection, observation and
//! model update. Emits a complete self-describing trace.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::anomaly::{adaptive_theta, detect, score_all};
use crate::beliefs::{
    augment, map_principle, update_posterior, ExpertSet, Hypothesis, HypothesisId, Observation,
    Principle, PrincipleId, PrincipleOrigin, PrincipleRegistry,
};
use crate::config::{Config, Mode};
use crate::error::{Error, Result};
use crate::generation::{Directive, GenerationContext, Generator, PrincipleBelief, TestedRecord};
use crate::gp::{FitConfig, GpExpert};
use crate::ids::{select, SampleSeed, SelectionPolicy};
use crate::metrics;
use crate::rng;
use crate::semantic::{pair_features, Embedder};
use crate::trace::{
    config_hash, world_hash, AnomalySnapshot, ObservationRecord, RoundTrace, Trace, TraceHeader,
    WorldSummary, TRACE_FORMAT, TRACE_VERSION,
};
use crate::world::SyntheticWorld;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrincipleDirectiveKind {
    Diversify,
    Refine,
    Discover,
    Silent,
}

impl PrincipleDirectiveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrincipleDirectiveKind::Diversify => "diversify",
            PrincipleDirectiveKind::Refine => "refine",
            PrincipleDirectiveKind::Discover => "discover",
            PrincipleDirectiveKind::Silent => "silent",
        }
    }

    fn origin(&self) -> PrincipleOrigin {
        match self {
            PrincipleDirectiveKind::Diversify => PrincipleOrigin::Diversify,
            PrincipleDirectiveKind::Refine => PrincipleOrigin::Refine,
            PrincipleDirectiveKind::Discover => PrincipleOrigin::Discover,
            PrincipleDirectiveKind::Silent => PrincipleOrigin::Initial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisDirectiveKind {
    Exploit,
    Explore,
}

impl HypothesisDirectiveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HypothesisDirectiveKind::Exploit => "exploit",
            HypothesisDirectiveKind::Explore => "explore",
        }
    }
}

pub struct GuidanceInputs {
    pub map_mass: Real,
    pub triggered: bool,
    pub round: usize,
    pub warm_up_rounds: usize,
    pub working_set: usize,
    pub confidence_threshold: Real,
}

/// Phase-1 branching on last round's posterior snapshot: anomalies route to
/// refinement (confident MAP) or discovery (diffuse posterior); otherwise
/// diversification fires only during warm-up or principle-space collapse.
pub fn guidance_for_round(g: &GuidanceInputs) -> (PrincipleDirectiveKind, HypothesisDirectiveKind) {
    let principle = if g.triggered && g.map_mass >= g.confidence_threshold {
        PrincipleDirectiveKind::Refine
    } else if g.triggered {
        PrincipleDirectiveKind::Discover
    } else if g.round < g.warm_up_rounds || g.working_set < 2 {
        PrincipleDirectiveKind::Diversify
    } else {
        PrincipleDirectiveKind::Silent
    };
    let hypothesis = if g.map_mass >= g.confidence_threshold && g.round >= g.warm_up_rounds {
        HypothesisDirectiveKind::Exploit
    } else {
        HypothesisDirectiveKind::Explore
    };
    (principle, hypothesis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMap {
    pub id: PrincipleId,
    pub text: String,
    pub mass: Real,
    pub dot_with_true_center: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rounds_executed: usize,
    pub budget: usize,
    pub truncated: bool,
    pub sq_percent: Real,
    pub auoc_percent: Real,
    pub apd: Option<Real>,
    pub final_map: FinalMap,
    pub augmentations: usize,
    pub principle_count: usize,
    pub discovery_round: Option<usize>,
    pub watershed_round: Option<usize>,
    pub regret_coefficient: Real,
    pub regret_alpha: Real,
    pub v_star: Real,
    pub config_hash: String,
    pub world_hash: String,
    pub error: Option<String>,
}

pub struct RunOutput {
    pub trace: Trace,
    pub summary: Summary,
}

/// Execute one full run: exactly `budget` rounds in phase order, or fewer
/// when the hypothesis universe is exhausted (recorded as truncation).
pub fn run(
    config: &Config,
    world: &SyntheticWorld,
    generator: &mut dyn Generator,
    embedder: &Embedder,
) -> Result<RunOutput> {
    config.validate()?;
    let rc = &config.run;
    let fit_cfg = FitConfig::new(rc.obs_noise_variance);

    // hypothesis store starts as the world universe; novel texts join later
    let mut store = world.hypothesis_store();

    // initial working set
    let initial_texts: Vec<String> = if rc.initial_principles.is_empty() {
        world
            .latents
            .iter()
            .enumerate()
            .filter(|(i, _)| rc.include_true_principle || *i != world.true_index)
            .map(|(_, l)| l.text.clone())
            .collect()
    } else {
        rc.initial_principles.clone()
    };
    if initial_texts.is_empty() {
        return Err(Error::validation("initial principle set is empty"));
    }
    let mut registry = PrincipleRegistry::new();
    let mut experts = ExpertSet::new();
    for (i, text) in initial_texts.iter().enumerate() {
        let embedding = match world.latents.iter().find(|l| &l.text == text) {
            Some(l) => l.center.clone(),
            None => embedder.embed(text)?,
        };
        let p = Principle {
            id: PrincipleId::numbered(i),
            text: text.clone(),
            embedding,
            created_round: 0,
            origin: PrincipleOrigin::Initial,
            prior_weight: 1.0,
        };
        experts.insert(p.id.clone(), GpExpert::fit(&[], &fit_cfg, None)?);
        registry.add(p)?;
    }
    let initial_principles: Vec<Principle> = registry.iter().cloned().collect();

    let mut noise_stream = rng::stream(rc.seed, "noise", &[]);
    let mut history: Vec<Observation> = Vec::new();
    let mut tested: BTreeSet<HypothesisId> = BTreeSet::new();
    let mut pool: BTreeSet<HypothesisId> = BTreeSet::new();
    let mut beliefs = update_posterior(
        &registry,
        &experts,
        &history,
        &store,
        rc.obs_noise_variance,
        0,
    )?;
    // trailing per-round score vectors for the adaptive threshold
    let mut trailing: std::collections::VecDeque<Vec<Real>> = Default::default();

    let mut rounds: Vec<RoundTrace> = Vec::with_capacity(rc.budget);
    let mut truncated = false;

    for t in 0..rc.budget {
        // ------------------------------------------------------------------
        // phase 1: anomaly detection & coherent augmentation (previous
        // posterior snapshot; the in-flight observation never participates)
        // ------------------------------------------------------------------
        let map_id = map_principle(&beliefs, &registry)?;
        let map_mass = beliefs.mass_of(&map_id).unwrap_or(0.0);
        let map_principle_data = registry.get(&map_id).expect("map id registered").clone();
        let theta_t = if rc.adaptive_theta {
            let flat: Vec<Real> = trailing.iter().flatten().copied().collect();
            adaptive_theta(&flat, rc.theta)
        } else {
            rc.theta
        };
        let map_expert = experts.get(&map_id).expect("map expert fitted");
        let anomaly_set = detect(
            &history,
            &store,
            map_expert,
            &map_principle_data.embedding,
            theta_t,
            rc.count_threshold,
            rc.obs_noise_variance,
        )?;
        if rc.adaptive_theta {
            trailing.push_back(score_all(
                &history,
                &store,
                map_expert,
                &map_principle_data.embedding,
                rc.obs_noise_variance,
            )?);
            if trailing.len() > 10 {
                trailing.pop_front();
            }
        }

        let (mut p_kind, h_kind) = guidance_for_round(&GuidanceInputs {
            map_mass,
            triggered: anomaly_set.triggered,
            round: t,
            warm_up_rounds: rc.warm_up_rounds,
            working_set: registry.len(),
            confidence_threshold: rc.confidence_threshold,
        });
        if rc.mode == Mode::StaticEvolution {
            p_kind = PrincipleDirectiveKind::Silent;
        }

        let active: Vec<PrincipleBelief> = registry
            .iter()
            .map(|p| PrincipleBelief {
                id: p.id.clone(),
                text: p.text.clone(),
                mass: beliefs.mass_of(&p.id).unwrap_or(0.0),
                embedding: p.embedding.clone(),
            })
            .collect();
        let map_belief = PrincipleBelief {
            id: map_principle_data.id.clone(),
            text: map_principle_data.text.clone(),
            mass: map_mass,
            embedding: map_principle_data.embedding.clone(),
        };

        let mut principle_added: Option<Principle> = None;
        let mut generation_error: Option<String> = None;
        if p_kind != PrincipleDirectiveKind::Silent {
            let directive = match p_kind {
                PrincipleDirectiveKind::Diversify => Directive::DiversifyPrinciples {
                    active: active.clone(),
                },
                PrincipleDirectiveKind::Refine => Directive::RefineWithAnomalies {
                    top: map_belief.clone(),
                    anomalies: anomaly_set.records.clone(),
                    active: active.clone(),
                },
                PrincipleDirectiveKind::Discover => Directive::DiscoverNewPrinciple {
                    anomalies: anomaly_set.records.clone(),
                    active: active.clone(),
                },
                PrincipleDirectiveKind::Silent => unreachable!(),
            };
            let active_texts: BTreeSet<String> = registry.iter().map(|p| p.text.clone()).collect();
            let cx = GenerationContext {
                store: &store,
                tested: &tested,
                pool: &pool,
                active_texts: &active_texts,
                round: t,
            };
            match generator.propose_principle(&directive, &cx) {
                Ok(None) => {}
                Ok(Some(prop)) if registry.contains_text(&prop.text) => {}
                Ok(Some(prop)) => {
                    let embedding = match prop.embedding {
                        Some(e) => e,
                        None => embedder.embed(&prop.text)?,
                    };
                    let p = Principle {
                        id: PrincipleId::numbered(registry.len()),
                        text: prop.text,
                        embedding,
                        created_round: t,
                        origin: p_kind.origin(),
                        prior_weight: 1.0,
                    };
                    augment(
                        &mut registry,
                        &mut experts,
                        p.clone(),
                        &history,
                        &store,
                        rc.obs_noise_variance,
                        &fit_cfg,
                        t,
                    )?;
                    principle_added = Some(p);
                }
                Err(e) => {
                    // augmentation skipped this round, recorded in the trace
                    generation_error = Some(e.to_string());
                }
            }
        }

        // ------------------------------------------------------------------
        // phase 2: full-history posterior update
        // ------------------------------------------------------------------
        beliefs = update_posterior(
            &registry,
            &experts,
            &history,
            &store,
            rc.obs_noise_variance,
            t,
        )?;
        let expert_params: Vec<(PrincipleId, crate::gp::KernelParams<Real>)> = registry
            .iter()
            .map(|p| (p.id.clone(), *experts.get(&p.id).expect("expert").params()))
            .collect();

        // ------------------------------------------------------------------
        // phase 3: hypothesis selection
        // ------------------------------------------------------------------
        let tested_records: Vec<TestedRecord> = history
            .iter()
            .map(|o| TestedRecord {
                text: store
                    .get(&o.hypothesis_id)
                    .map(|h| h.text.clone())
                    .unwrap_or_else(|| o.hypothesis_id.0.clone()),
                outcome: o.outcome,
            })
            .collect();
        let h_directive = match h_kind {
            HypothesisDirectiveKind::Exploit => Directive::ExploitHypotheses {
                task: rc.task_context.clone(),
                tested: tested_records,
                top: map_belief.clone(),
            },
            HypothesisDirectiveKind::Explore => Directive::ExploreHypotheses {
                task: rc.task_context.clone(),
                tested: tested_records,
            },
        };
        {
            let active_texts: BTreeSet<String> = registry.iter().map(|p| p.text.clone()).collect();
            let cx = GenerationContext {
                store: &store,
                tested: &tested,
                pool: &pool,
                active_texts: &active_texts,
                round: t,
            };
            match generator.propose_hypotheses(&h_directive, rc.proposals_per_round, &cx) {
                Ok(props) => {
                    for prop in props {
                        let id = match &prop.id {
                            Some(id) => id.clone(),
                            None => {
                                HypothesisId(format!("x{:016x}", rng::fnv1a(prop.text.as_bytes())))
                            }
                        };
                        if tested.contains(&id) || pool.contains(&id) {
                            continue;
                        }
                        if store.get(&id).is_none() {
                            let embedding = match prop.embedding {
                                Some(e) => e,
                                None => embedder.embed(&prop.text)?,
                            };
                            store.insert(Hypothesis {
                                id: id.clone(),
                                text: prop.text.clone(),
                                embedding,
                            });
                        }
                        pool.insert(id);
                    }
                }
                Err(Error::Exhausted) => {}
                Err(e) => {
                    generation_error = Some(match generation_error {
                        Some(prev) => format!("{prev}; {e}"),
                        None => e.to_string(),
                    });
                }
            }
        }
        if pool.is_empty() {
            truncated = true;
            break;
        }
        let policy = match rc.mode {
            Mode::GreedyOnly => SelectionPolicy::Greedy,
            _ if t < rc.warm_up_rounds => SelectionPolicy::WarmUp,
            _ => SelectionPolicy::Ids,
        };
        let pool_vec: Vec<HypothesisId> = pool.iter().cloned().collect();
        let (selected, scores) = select(
            &pool_vec,
            &beliefs,
            &registry,
            &experts,
            &store,
            policy,
            rc.obs_noise_variance,
            rc.bald_samples,
            rc.epsilon_floor,
            SampleSeed {
                run_seed: rc.seed,
                round: t,
            },
        )?;

        // ------------------------------------------------------------------
        // phase 4: observation & model update
        // ------------------------------------------------------------------
        let result = world.evaluate(&selected, &mut noise_stream);
        let observation = Observation {
            hypothesis_id: selected.clone(),
            outcome: result.outcome,
            round: t,
            failed: result.failed,
        };
        history.push(observation);
        pool.remove(&selected);
        tested.insert(selected.clone());
        for p in registry.iter() {
            let training: Vec<_> = history
                .iter()
                .map(|o| {
                    let h = store.require(&o.hypothesis_id)?;
                    Ok((pair_features(&h.embedding, &p.embedding)?, o.outcome))
                })
                .collect::<Result<_>>()?;
            let warm = *experts.get(&p.id).expect("expert").params();
            experts.insert(
                p.id.clone(),
                GpExpert::fit(&training, &fit_cfg, Some(&warm))?,
            );
        }

        let selected_hyp = store.require(&selected)?;
        rounds.push(RoundTrace {
            round: t,
            principle_directive: p_kind.as_str().to_string(),
            hypothesis_directive: h_kind.as_str().to_string(),
            principle_added,
            generation_error,
            anomalies: AnomalySnapshot {
                threshold: anomaly_set.threshold_used,
                triggered: anomaly_set.triggered,
                records: anomaly_set.records,
            },
            scores,
            selected: selected.clone(),
            observation: ObservationRecord {
                hypothesis_id: selected_hyp.id.clone(),
                text: selected_hyp.text.clone(),
                embedding: selected_hyp.embedding.clone(),
                outcome: result.outcome,
                failed: result.failed,
            },
            beliefs: beliefs.clone(),
            expert_params,
        });
    }

    if rounds.is_empty() {
        return Err(Error::Exhausted);
    }

    let (best_id, v_star) = world.true_best();
    let header = TraceHeader {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION,
        config: config.clone(),
        config_hash: config_hash(config)?,
        world_hash: world_hash(world)?,
        world_summary: WorldSummary {
            v_star,
            best_hypothesis_id: best_id,
            true_center: world.true_center().clone(),
            latent_count: world.latents.len(),
            universe_size: world.universe.len(),
        },
        initial_principles: initial_principles.clone(),
    };
    let trace = Trace { header, rounds };
    let summary = summarize(&trace, config, &registry, truncated)?;
    Ok(RunOutput { trace, summary })
}

fn summarize(
    trace: &Trace,
    config: &Config,
    registry: &PrincipleRegistry,
    truncated: bool,
) -> Result<Summary> {
    let report = metrics::report(trace, None, metrics::DEFAULT_DISCOVERY_DOT)?;
    let final_beliefs = &trace.rounds.last().expect("nonempty trace").beliefs;
    let map_id = map_principle(final_beliefs, registry)?;
    let map_p = registry
        .get(&map_id)
        .ok_or_else(|| Error::validation("final MAP principle missing"))?;
    let true_center = &trace.header.world_summary.true_center;
    Ok(Summary {
        rounds_executed: trace.rounds.len(),
        budget: config.run.budget,
        truncated,
        sq_percent: report.sq_percent,
        auoc_percent: report.auoc_percent,
        apd: report.apd,
        final_map: FinalMap {
            id: map_p.id.clone(),
            text: map_p.text.clone(),
            mass: final_beliefs.mass_of(&map_p.id).unwrap_or(0.0),
            dot_with_true_center: map_p.embedding.dot(true_center)?,
        },
        augmentations: registry.len() - trace.header.initial_principles.len(),
        principle_count: registry.len(),
        discovery_round: report.discovery_round,
        watershed_round: report.watershed_round,
        regret_coefficient: report.regret_coefficient,
        regret_alpha: report.regret_alpha,
        v_star: trace.header.world_summary.v_star,
        config_hash: trace.header.config_hash.clone(),
        world_hash: trace.header.world_hash.clone(),
        error: None,
    })
}
