//! Surprisal scoring of observations under the MAP principle's expert, and
//! the count-based trigger for the discovery phase.

use serde::{Deserialize, Serialize};

use crate::beliefs::{HypothesisId, HypothesisStore, Observation};
use crate::error::{Error, Result};
use crate::gp::GpExpert;
use crate::scalar::Scalar;
use crate::semantic::{pair_features, UnitVector};
use crate::Real;

/// Bounded surprisal of an observation against a predictive distribution:
/// `1 - exp(-sqrt(residual^2 / (variance + obs_noise_variance)))`.
/// Zero iff the residual is zero; strictly increasing in |residual|,
/// strictly decreasing in total variance; always in [0, 1).
pub fn anomaly_score<S: Scalar>(y: S, mean: S, variance: S, obs_noise_variance: S) -> Result<S> {
    let total = variance + obs_noise_variance;
    if total <= S::zero() || !total.is_finite() {
        return Err(Error::validation(
            "total variance must be positive and finite",
        ));
    }
    let r = y - mean;
    Ok(S::one() - (-(r * r / total).sqrt()).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub hypothesis_id: HypothesisId,
    pub score: Real,
    pub residual: Real,
    pub predictive_variance: Real,
    pub round: usize,
}

/// Observations whose score exceeded the threshold, sorted by descending
/// score, plus the trigger decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySet {
    pub records: Vec<AnomalyRecord>,
    pub threshold_used: Real,
    pub triggered: bool,
}

impl AnomalySet {
    pub fn empty(threshold: Real) -> Self {
        AnomalySet {
            records: Vec::new(),
            threshold_used: threshold,
            triggered: false,
        }
    }
}

/// The full per-observation score vector under the MAP expert, in history
/// order. Feeds both flagging and the adaptive-threshold window.
pub fn score_all(
    history: &[Observation],
    store: &HypothesisStore,
    map_expert: &GpExpert<Real>,
    map_embedding: &UnitVector<Real>,
    obs_noise_variance: Real,
) -> Result<Vec<Real>> {
    history
        .iter()
        .map(|obs| {
            let hyp = store.require(&obs.hypothesis_id)?;
            let x = pair_features(&hyp.embedding, map_embedding)?;
            let p = map_expert.predict(&x)?;
            anomaly_score(obs.outcome, p.mean, p.variance, obs_noise_variance)
        })
        .collect()
}

/// Score every observation in the history under the MAP principle's expert
/// and flag those above `theta`. Triggering is count-based: at least
/// `count_threshold` flagged observations.
///
/// Scores depend on the history only through per-observation (residual,
/// variance) pairs; callers pass last round's history so the in-flight
/// observation never participates.
pub fn detect(
    history: &[Observation],
    store: &HypothesisStore,
    map_expert: &GpExpert<Real>,
    map_embedding: &UnitVector<Real>,
    theta: Real,
    count_threshold: usize,
    obs_noise_variance: Real,
) -> Result<AnomalySet> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::validation("anomaly threshold must lie in (0, 1)"));
    }
    let mut records = Vec::new();
    for obs in history {
        let hyp = store.require(&obs.hypothesis_id)?;
        let x = pair_features(&hyp.embedding, map_embedding)?;
        let p = map_expert.predict(&x)?;
        let score = anomaly_score(obs.outcome, p.mean, p.variance, obs_noise_variance)?;
        if score > theta {
            records.push(AnomalyRecord {
                hypothesis_id: obs.hypothesis_id.clone(),
                score,
                residual: obs.outcome - p.mean,
                predictive_variance: p.variance,
                round: obs.round,
            });
        }
    }
    records.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.round.cmp(&b.round))
            .then(a.hypothesis_id.cmp(&b.hypothesis_id))
    });
    let triggered = records.len() >= count_threshold;
    Ok(AnomalySet {
        records,
        threshold_used: theta,
        triggered,
    })
}

/// Adaptive threshold: the 90th percentile (nearest-rank) of the trailing
/// window's score distribution, floored at 0.5. Falls back to `fallback`
/// when no trailing scores exist yet.
pub fn adaptive_theta(trailing_scores: &[Real], fallback: Real) -> Real {
    if trailing_scores.is_empty() {
        return fallback;
    }
    let mut sorted = trailing_scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = ((0.9 * sorted.len() as Real).ceil() as usize).clamp(1, sorted.len());
    let p90 = sorted[rank - 1];
    // keep strictly below 1 so `detect` accepts it
    p90.clamp(0.5, 1.0 - 1e-9)
}
