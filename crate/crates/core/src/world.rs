//! Synthetic discovery worlds: a known latent true principle, a noisy reward
//! oracle, and brute-force ground truth for regret and acceptance tests.
//!
//! Rewards depend only on the semantic alignment between a hypothesis and the
//! true principle's center: y = base + gain * s(<e_h, e_P*>) + eps, with the
//! monotone shaping s(u) = ((u + 1) / 2)^2 keeping noiseless rewards in
//! [base, base + gain].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beliefs::{Hypothesis, HypothesisId, HypothesisStore};
use crate::error::{Error, Result};
use crate::rng;
use crate::semantic::UnitVector;
use crate::Real;

/// Construction parameters for a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub clusters: usize,
    pub hypotheses_per_cluster: usize,
    pub gain: Real,
    pub base: Real,
    /// Standard deviation of the observation noise.
    pub noise_std: Real,
    pub dim: usize,
    /// Cluster of the true principle; drawn from the world stream when absent.
    pub true_index: Option<usize>,
    /// Exponent of the alignment shaping s(u) = ((u + 1) / 2)^p. Higher
    /// values concentrate reward near perfect alignment, so broad coverage
    /// alone cannot reach the optimum.
    pub shaping_power: Real,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            clusters: 5,
            hypotheses_per_cluster: 40,
            gain: 1.0,
            base: 0.0,
            noise_std: 0.05,
            dim: crate::semantic::DEFAULT_EMBED_DIM,
            true_index: None,
            shaping_power: 8.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPrinciple {
    pub text: String,
    pub center: UnitVector<Real>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldHypothesis {
    pub id: HypothesisId,
    pub text: String,
    pub embedding: UnitVector<Real>,
    pub cluster: usize,
}

/// Self-describing synthetic world. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    pub latents: Vec<LatentPrinciple>,
    pub true_index: usize,
    pub universe: Vec<WorldHypothesis>,
    pub failure_outcome: Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub outcome: Real,
    pub failed: bool,
}

const MAX_CENTER_SEPARATION_DOT: f64 = 0.3;
const MIN_MEMBER_DOT: f64 = 0.8;
const CENTER_RETRIES: usize = 10_000;

fn random_unit(rng: &mut impl Rng, dim: usize) -> UnitVector<Real> {
    loop {
        let raw: Vec<Real> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = UnitVector::normalized(raw) {
            return u;
        }
    }
}

/// s(u) = ((u + 1) / 2)^p, monotone on [-1, 1] with range [0, 1].
pub fn shaping(u: Real, power: Real) -> Real {
    ((u + 1.0) / 2.0).powf(power)
}

/// Deterministic world construction from the spec's seed. Cluster centers
/// are rejection-sampled until pairwise dots stay below 0.3; members are
/// placed at a uniform-random angle from their center with dot >= 0.8 by
/// construction.
pub fn build_world(spec: &WorldSpec) -> Result<SyntheticWorld> {
    if spec.clusters < 2 {
        return Err(Error::validation("world needs at least 2 clusters"));
    }
    if spec.hypotheses_per_cluster == 0 {
        return Err(Error::validation("world needs hypotheses in each cluster"));
    }
    if spec.noise_std < 0.0 {
        return Err(Error::validation("noise std must be >= 0"));
    }
    if spec.dim < 2 {
        return Err(Error::validation("embedding dimension must be >= 2"));
    }
    if !(spec.shaping_power > 0.0 && spec.shaping_power.is_finite()) {
        return Err(Error::validation(
            "shaping power must be positive and finite",
        ));
    }
    if spec.clusters * spec.hypotheses_per_cluster > 10_000 {
        return Err(Error::validation("hypothesis universe exceeds 10000"));
    }
    let mut stream = rng::stream(spec.seed, "world", &[]);

    let mut centers: Vec<UnitVector<Real>> = Vec::with_capacity(spec.clusters);
    for c in 0..spec.clusters {
        let mut placed = false;
        for _ in 0..CENTER_RETRIES {
            let cand = random_unit(&mut stream, spec.dim);
            let ok = centers
                .iter()
                .all(|u| u.dot(&cand).unwrap() <= MAX_CENTER_SEPARATION_DOT);
            if ok {
                centers.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::WorldConstruction(format!(
                "could not separate cluster center {c} after {CENTER_RETRIES} draws"
            )));
        }
    }

    let latents: Vec<LatentPrinciple> = centers
        .iter()
        .enumerate()
        .map(|(i, center)| LatentPrinciple {
            text: format!("Outcomes are maximized by candidates aligned with latent mechanism {i}"),
            center: center.clone(),
        })
        .collect();

    let true_index = match spec.true_index {
        Some(i) => {
            if i >= spec.clusters {
                return Err(Error::validation("true_index out of range"));
            }
            i
        }
        None => stream.gen_range(0..spec.clusters),
    };

    let mut universe = Vec::with_capacity(spec.clusters * spec.hypotheses_per_cluster);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..spec.hypotheses_per_cluster {
            // top-heavy alignment: members crowd toward their center, so a
            // cluster's optimum is approached by many nearby candidates
            // rather than a single isolated best
            let u: Real = stream.gen();
            let dot = 1.0 - (1.0 - MIN_MEMBER_DOT) * u * u;
            // random direction orthogonal to the center
            let ortho = {
                let raw = random_unit(&mut stream, spec.dim);
                let proj = center.dot(&raw).unwrap();
                let vals: Vec<Real> = raw
                    .as_slice()
                    .iter()
                    .zip(center.as_slice())
                    .map(|(r, c)| r - proj * c)
                    .collect();
                UnitVector::normalized(vals).map_err(|_| {
                    Error::WorldConstruction("degenerate orthogonal direction".into())
                })?
            };
            let tangent = (1.0 - dot * dot).sqrt();
            let vals: Vec<Real> = center
                .as_slice()
                .iter()
                .zip(ortho.as_slice())
                .map(|(c, o)| dot * c + tangent * o)
                .collect();
            let embedding = UnitVector::normalized(vals)
                .map_err(|_| Error::WorldConstruction("degenerate member embedding".into()))?;
            let id = HypothesisId(format!("c{c}-{i:04}"));
            universe.push(WorldHypothesis {
                text: format!("configuration {id}"),
                id,
                embedding,
                cluster: c,
            });
        }
    }

    Ok(SyntheticWorld {
        spec: spec.clone(),
        latents,
        true_index,
        universe,
        failure_outcome: 0.0,
    })
}

impl SyntheticWorld {
    pub fn true_center(&self) -> &UnitVector<Real> {
        &self.latents[self.true_index].center
    }

    pub fn find(&self, id: &HypothesisId) -> Option<&WorldHypothesis> {
        self.universe.iter().find(|h| &h.id == id)
    }

    /// Noiseless reward of a universe member.
    pub fn noiseless_outcome(&self, h: &WorldHypothesis) -> Real {
        let dot = h.embedding.dot(self.true_center()).expect("same dim");
        self.spec.base + self.spec.gain * shaping(dot, self.spec.shaping_power)
    }

    /// Apply the reward law with a fresh draw from the caller's noise stream.
    /// Unknown hypotheses fail with the configured failure outcome; failures
    /// consume no noise draw.
    pub fn evaluate(&self, id: &HypothesisId, noise: &mut impl Rng) -> EvalResult {
        match self.find(id) {
            None => EvalResult {
                outcome: self.failure_outcome,
                failed: true,
            },
            Some(h) => {
                let eps: Real = if self.spec.noise_std > 0.0 {
                    self.spec.noise_std * noise.sample::<Real, _>(StandardNormal)
                } else {
                    0.0
                };
                EvalResult {
                    outcome: self.noiseless_outcome(h) + eps,
                    failed: false,
                }
            }
        }
    }

    /// Exhaustive scan of the noiseless reward law over the universe.
    pub fn true_best(&self) -> (HypothesisId, Real) {
        let mut best = &self.universe[0];
        let mut best_y = self.noiseless_outcome(best);
        for h in &self.universe[1..] {
            let y = self.noiseless_outcome(h);
            if y > best_y {
                best_y = y;
                best = h;
            }
        }
        (best.id.clone(), best_y)
    }

    /// View of the universe as an engine hypothesis store.
    pub fn hypothesis_store(&self) -> HypothesisStore {
        let mut store = HypothesisStore::default();
        for h in &self.universe {
            store.insert(Hypothesis {
                id: h.id.clone(),
                text: h.text.clone(),
                embedding: h.embedding.clone(),
            });
        }
        store
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
