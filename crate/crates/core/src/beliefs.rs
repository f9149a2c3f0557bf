//! The active principle working set and its full-history Bayesian posterior.
//!
//! Masses are accumulated in log space (a principle's log mass is its log
//! prior plus the sum of per-observation predictive log likelihoods under
//! that principle's expert) and normalized with a max-shifted log-sum-exp.
//! Augmentation back-fills a fresh expert on the entire history and
//! recomputes the posterior from scratch — the stored posterior always
//! equals a from-scratch recomputation on the final working set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{FitConfig, GpExpert};
use crate::scalar::Scalar;
use crate::semantic::{pair_features, UnitVector};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrincipleId(pub String);

impl std::fmt::Display for PrincipleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl PrincipleId {
    pub fn numbered(n: usize) -> Self {
        PrincipleId(format!("P{n:03}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HypothesisId(pub String);

impl std::fmt::Display for HypothesisId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrincipleOrigin {
    Initial,
    Diversify,
    Refine,
    Discover,
}

/// A natural-language statement of a mechanism or correlation: the unit over
/// which beliefs are maintained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Principle {
    pub id: PrincipleId,
    pub text: String,
    pub embedding: UnitVector<Real>,
    pub created_round: usize,
    pub origin: PrincipleOrigin,
    /// Unnormalized prior weight; the working-set prior is the normalized
    /// weight vector. The engine always assigns 1.
    #[serde(default = "default_weight")]
    pub prior_weight: Real,
}

fn default_weight() -> Real {
    1.0
}

/// A concrete testable candidate executed against the environment oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: HypothesisId,
    pub text: String,
    pub embedding: UnitVector<Real>,
}

#[derive(Debug, Clone, Default)]
pub struct HypothesisStore {
    map: BTreeMap<HypothesisId, Hypothesis>,
}

impl HypothesisStore {
    pub fn insert(&mut self, h: Hypothesis) {
        self.map.insert(h.id.clone(), h);
    }

    pub fn get(&self, id: &HypothesisId) -> Option<&Hypothesis> {
        self.map.get(id)
    }

    pub fn require(&self, id: &HypothesisId) -> Result<&Hypothesis> {
        self.get(id)
            .ok_or_else(|| Error::validation(format!("unknown hypothesis id {id}")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One entry of the interaction history. Failed executions carry the
/// environment's failure outcome and are still recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub hypothesis_id: HypothesisId,
    pub outcome: Real,
    pub round: usize,
    pub failed: bool,
}

/// Insertion-ordered registry of the active working set.
#[derive(Debug, Clone, Default)]
pub struct PrincipleRegistry {
    items: Vec<Principle>,
}

impl PrincipleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, p: Principle) -> Result<()> {
        if self.items.iter().any(|q| q.id == p.id) {
            return Err(Error::DuplicatePrinciple(p.id.0.clone()));
        }
        if p.text.is_empty() {
            return Err(Error::validation("principle text must be nonempty"));
        }
        if !(p.prior_weight.is_finite() && p.prior_weight > 0.0) {
            return Err(Error::validation(
                "prior weight must be positive and finite",
            ));
        }
        self.items.push(p);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Principle> {
        self.items.iter()
    }

    pub fn get(&self, id: &PrincipleId) -> Option<&Principle> {
        self.items.iter().find(|p| &p.id == id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.items.iter().any(|p| p.text == text)
    }

    /// Log of the normalized prior table, in registry order.
    pub fn log_prior(&self) -> Vec<(PrincipleId, Real)> {
        let total: Real = self.items.iter().map(|p| p.prior_weight).sum();
        self.items
            .iter()
            .map(|p| (p.id.clone(), (p.prior_weight / total).ln()))
            .collect()
    }

    /// Entropy of the normalized prior table, in nats.
    pub fn prior_entropy(&self) -> Real {
        let total: Real = self.items.iter().map(|p| p.prior_weight).sum();
        -self
            .items
            .iter()
            .map(|p| {
                let q = p.prior_weight / total;
                if q > 0.0 {
                    q * q.ln()
                } else {
                    0.0
                }
            })
            .sum::<Real>()
    }
}

pub type ExpertSet = BTreeMap<PrincipleId, GpExpert<Real>>;

/// Max-shifted log-sum-exp; returns -inf only when every input is -inf.
pub fn log_sum_exp<S: Scalar>(vals: &[S]) -> S {
    let m = vals
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    if m == S::neg_infinity() {
        return S::neg_infinity();
    }
    let sum = vals.iter().map(|v| (*v - m).exp()).sum::<S>();
    m + sum.ln()
}

/// Shannon entropy of a normalized mass vector, in nats (0 ln 0 = 0).
pub fn entropy_nats<S: Scalar>(masses: &[S]) -> S {
    -masses
        .iter()
        .map(|p| {
            if *p > S::zero() {
                *p * p.ln()
            } else {
                S::zero()
            }
        })
        .sum::<S>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefEntry {
    pub principle_id: PrincipleId,
    pub mass: Real,
    /// Normalized log mass; stays finite long after the linear mass
    /// underflows, which the trace analytics rely on.
    pub log_mass: Real,
    /// Log of the normalized prior this mass started from.
    pub log_prior: Real,
}

/// Normalized posterior over the working set at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub round: usize,
    pub masses: Vec<BeliefEntry>,
    pub entropy: Real,
}

impl BeliefState {
    pub fn mass_of(&self, id: &PrincipleId) -> Option<Real> {
        self.masses
            .iter()
            .find(|e| &e.principle_id == id)
            .map(|e| e.mass)
    }

    pub fn log_mass_of(&self, id: &PrincipleId) -> Option<Real> {
        self.masses
            .iter()
            .find(|e| &e.principle_id == id)
            .map(|e| e.log_mass)
    }
}

/// Full-history posterior update: for each principle, log mass equals its
/// log prior plus the sum over history of the expert's leave-one-out
/// predictive log-density of each recorded outcome.
///
/// Every expert must be fitted on exactly this history (in order) under its
/// own principle's pair features; the LOO density of observation s is then
/// the likelihood of y_s given all other evidence. Scoring training points
/// with the plain in-sample density instead would reward hyperparameters
/// that interpolate noise.
pub fn update_posterior(
    registry: &PrincipleRegistry,
    experts: &ExpertSet,
    history: &[Observation],
    store: &HypothesisStore,
    obs_noise_variance: Real,
    round: usize,
) -> Result<BeliefState> {
    if registry.is_empty() {
        return Err(Error::validation("working set is empty"));
    }
    if obs_noise_variance <= 0.0 {
        return Err(Error::validation("observation noise variance must be > 0"));
    }
    for obs in history {
        store.require(&obs.hypothesis_id)?;
    }
    let mut ids = Vec::with_capacity(registry.len());
    let mut priors = Vec::with_capacity(registry.len());
    let mut logs = Vec::with_capacity(registry.len());
    let total: Real = registry.iter().map(|p| p.prior_weight).sum();
    for principle in registry.iter() {
        let expert = experts.get(&principle.id).ok_or_else(|| {
            Error::validation(format!("no fitted expert for principle {}", principle.id))
        })?;
        if expert.len() != history.len() {
            return Err(Error::validation(format!(
                "expert for {} fitted on {} points but the history has {}",
                principle.id,
                expert.len(),
                history.len()
            )));
        }
        let log_prior = (principle.prior_weight / total).ln();
        let lp = log_prior + expert.loo_log_likelihoods()?.into_iter().sum::<Real>();
        ids.push(principle.id.clone());
        priors.push(log_prior);
        logs.push(lp);
    }
    let lse = log_sum_exp(&logs);
    if lse == Real::NEG_INFINITY {
        return Err(Error::DegeneratePosterior);
    }
    let masses: Vec<BeliefEntry> = ids
        .into_iter()
        .zip(logs.iter().zip(&priors))
        .map(|(principle_id, (lp, log_prior))| BeliefEntry {
            principle_id,
            mass: (lp - lse).exp(),
            log_mass: lp - lse,
            log_prior: *log_prior,
        })
        .collect();
    let entropy = entropy_nats(&masses.iter().map(|e| e.mass).collect::<Vec<_>>());
    Ok(BeliefState {
        round,
        masses,
        entropy,
    })
}

/// The maximum a-posteriori principle. Ties break toward the smallest
/// creation round, then the lexicographically smallest id.
pub fn map_principle(beliefs: &BeliefState, registry: &PrincipleRegistry) -> Result<PrincipleId> {
    let mut best: Option<(&BeliefEntry, usize)> = None;
    for entry in &beliefs.masses {
        let created = registry
            .get(&entry.principle_id)
            .ok_or_else(|| {
                Error::validation(format!("unregistered principle {}", entry.principle_id))
            })?
            .created_round;
        best = match best {
            None => Some((entry, created)),
            Some((b, bc)) => {
                let better = entry.mass > b.mass
                    || (entry.mass == b.mass
                        && (created < bc
                            || (created == bc && entry.principle_id < b.principle_id)));
                if better {
                    Some((entry, created))
                } else {
                    Some((b, bc))
                }
            }
        };
    }
    best.map(|(e, _)| e.principle_id.clone())
        .ok_or_else(|| Error::validation("empty belief state"))
}

/// Coherent augmentation: register the new principle, back-fill a fresh
/// expert on the entire history, and recompute the posterior from scratch.
/// The prior table extends by the new unnormalized weight; existing masses
/// are never patched in place.
#[allow(clippy::too_many_arguments)]
pub fn augment(
    registry: &mut PrincipleRegistry,
    experts: &mut ExpertSet,
    new_principle: Principle,
    history: &[Observation],
    store: &HypothesisStore,
    obs_noise_variance: Real,
    fit_cfg: &FitConfig<Real>,
    round: usize,
) -> Result<BeliefState> {
    let id = new_principle.id.clone();
    let embedding = new_principle.embedding.clone();
    registry.add(new_principle)?;
    let training: Vec<_> = history
        .iter()
        .map(|obs| {
            let hyp = store.require(&obs.hypothesis_id)?;
            Ok((pair_features(&hyp.embedding, &embedding)?, obs.outcome))
        })
        .collect::<Result<_>>()?;
    let expert = GpExpert::fit(&training, fit_cfg, None)?;
    experts.insert(id, expert);
    update_posterior(registry, experts, history, store, obs_noise_variance, round)
}
