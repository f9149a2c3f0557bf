//! Normalized text embeddings and the hypothesis-principle pair features
//! consumed by every GP expert.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::transport::{post_with_retries, JsonTransport};

pub const DEFAULT_EMBED_DIM: usize = 64;

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "")]
pub struct UnitVector<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> UnitVector<S> {
    /// Wrap a vector, requiring it to already be unit-norm.
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::validation(format!(
                "unit vector needs dimension >= 2, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("unit vector has non-finite entries"));
        }
        let norm = values.iter().map(|v| *v * *v).sum::<S>().sqrt();
        if (norm - S::one()).abs() > S::unit_norm_tolerance() {
            return Err(Error::validation(format!(
                "vector norm {norm} is not 1 within tolerance"
            )));
        }
        Ok(UnitVector { values })
    }

    /// Normalize an arbitrary vector. Rejects zero-norm inputs — a zero
    /// embedding signals upstream failure, not data.
    pub fn normalized(values: Vec<S>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::validation(format!(
                "unit vector needs dimension >= 2, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("vector has non-finite entries"));
        }
        let norm = values.iter().map(|v| *v * *v).sum::<S>().sqrt();
        if norm <= S::zero() || !norm.is_finite() {
            return Err(Error::validation("cannot normalize zero-norm vector"));
        }
        let values = values.into_iter().map(|v| v / norm).collect();
        Ok(UnitVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn dot(&self, other: &UnitVector<S>) -> Result<S> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a * *b)
            .sum())
    }
}

/// The 2-vector (dot product, Euclidean distance) of two unit embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PairFeature<S: Scalar> {
    pub dot: S,
    pub distance: S,
}

impl<S: Scalar> PairFeature<S> {
    pub fn is_finite(&self) -> bool {
        self.dot.is_finite() && self.distance.is_finite()
    }
}

/// Compute the pair feature of two unit vectors. Symmetric in its arguments
/// and invariant under any shared rotation; for unit inputs the law of
/// cosines ties the components together: distance^2 = 2 - 2*dot.
pub fn pair_features<S: Scalar>(
    e_h: &UnitVector<S>,
    e_p: &UnitVector<S>,
) -> Result<PairFeature<S>> {
    let raw_dot = e_h.dot(e_p)?;
    let dot = raw_dot.min(S::one()).max(-S::one());
    let distance = e_h
        .as_slice()
        .iter()
        .zip(e_p.as_slice())
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum::<S>()
        .sqrt()
        .min(S::from_f64c(2.0))
        .max(S::zero());
    Ok(PairFeature { dot, distance })
}

/// Deterministic text embedder: a counter-based stream is seeded from a
/// stable 64-bit hash of the text xored with the run seed, d standard
/// normals are drawn and the result normalized. Identical text always
/// yields an identical vector; no network involved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HashEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        HashEmbedder { seed, dim }
    }

    pub fn embed<S: Scalar>(&self, text: &str) -> Result<UnitVector<S>> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        if self.dim < 2 {
            return Err(Error::validation("embedding dimension must be >= 2"));
        }
        let mut stream =
            rand_chacha::ChaCha8Rng::seed_from_u64(rng::fnv1a(text.as_bytes()) ^ self.seed);
        let raw: Vec<S> = (0..self.dim)
            .map(|_| S::from_f64c(stream.sample::<f64, _>(StandardNormal)))
            .collect();
        UnitVector::normalized(raw)
    }
}

use rand_chacha::rand_core::SeedableRng;

/// Client for an HTTP JSON embeddings service:
/// request `{model, input: [text]}`, response `{data: [{embedding: [..]}]}`.
/// Response vectors are re-normalized before return; zero-norm responses are
/// rejected rather than perturbed.
pub struct ExternalEmbedder<'t> {
    pub transport: &'t dyn JsonTransport,
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub retries: u32,
}

impl<'t> ExternalEmbedder<'t> {
    pub fn embed(&self, text: &str) -> Result<UnitVector<f64>> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        let body = serde_json::json!({ "model": self.model, "input": [text] });
        let resp = post_with_retries(
            self.transport,
            &self.endpoint,
            self.api_key.as_deref(),
            &body,
            self.retries,
        )?;
        let raw = resp
            .get("data")
            .and_then(|d| d.get(0))
            .and_then(|e| e.get("embedding"))
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::validation("embedding response missing data[0].embedding"))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::validation("non-numeric embedding entry"))
            })
            .collect::<Result<Vec<f64>>>()?;
        UnitVector::normalized(raw)
    }
}

/// Embedding backend selector used by the engine.
pub enum Embedder<'t> {
    Hash(HashEmbedder),
    External(ExternalEmbedder<'t>),
}

impl<'t> Embedder<'t> {
    pub fn embed(&self, text: &str) -> Result<UnitVector<crate::Real>> {
        match self {
            Embedder::Hash(h) => h.embed(text),
            Embedder::External(x) => x.embed(text),
        }
    }
}
