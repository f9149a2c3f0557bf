//! Principle- and hypothesis-proposal backends behind one interface: a
//! deterministic scripted backend for simulation, and a chat-completion
//! client driven by the shipped prompt templates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyRecord;
use crate::beliefs::{HypothesisId, HypothesisStore, PrincipleId};
use crate::error::{Error, Result};
use crate::rng;
use crate::semantic::UnitVector;
use crate::transport::{post_with_retries, JsonTransport};
use crate::world::SyntheticWorld;
use crate::Real;

pub const TEMPLATE_DIVERSIFY: &str = include_str!("../assets/templates/diversify.txt");
pub const TEMPLATE_REFINE: &str = include_str!("../assets/templates/refine.txt");
pub const TEMPLATE_DISCOVER: &str = include_str!("../assets/templates/discover.txt");
pub const TEMPLATE_EXPLOIT: &str = include_str!("../assets/templates/exploit.txt");
pub const TEMPLATE_EXPLORE: &str = include_str!("../assets/templates/explore.txt");

/// One active principle as seen by the generator: text and mass feed the
/// templates, the embedding feeds the scripted backend's geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleBelief {
    pub id: PrincipleId,
    pub text: String,
    pub mass: Real,
    pub embedding: UnitVector<Real>,
}

/// One executed hypothesis as rendered into the tested-memory slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestedRecord {
    pub text: String,
    pub outcome: Real,
}

/// Guidance injected once per round.
#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    DiversifyPrinciples {
        active: Vec<PrincipleBelief>,
    },
    RefineWithAnomalies {
        top: PrincipleBelief,
        anomalies: Vec<AnomalyRecord>,
        active: Vec<PrincipleBelief>,
    },
    DiscoverNewPrinciple {
        anomalies: Vec<AnomalyRecord>,
        active: Vec<PrincipleBelief>,
    },
    Silent,
    ExploitHypotheses {
        task: String,
        tested: Vec<TestedRecord>,
        top: PrincipleBelief,
    },
    ExploreHypotheses {
        task: String,
        tested: Vec<TestedRecord>,
    },
}

fn render_active(active: &[PrincipleBelief]) -> String {
    if active.is_empty() {
        return "(none)".to_string();
    }
    active
        .iter()
        .map(|p| format!("- [{:.4}] {}", p.mass, p.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_anomalies(records: &[AnomalyRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "- round {}: {} residual {:+.4}, predictive variance {:.6}, score {:.3}",
                r.round, r.hypothesis_id, r.residual, r.predictive_variance, r.score
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_tested(tested: &[TestedRecord]) -> String {
    if tested.is_empty() {
        return "(none)".to_string();
    }
    tested
        .iter()
        .map(|t| format!("- \"{}\" -> outcome {:.4}", t.text, t.outcome))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Render the prompt for a directive. `Silent` emits no prompt. Directives
/// that require anomaly context reject an empty payload.
pub fn render_template(directive: &Directive) -> Result<Option<String>> {
    match directive {
        Directive::Silent => Ok(None),
        Directive::DiversifyPrinciples { active } => Ok(Some(
            TEMPLATE_DIVERSIFY.replace("{active_principles}", &render_active(active)),
        )),
        Directive::RefineWithAnomalies {
            top,
            anomalies,
            active,
        } => {
            if anomalies.is_empty() {
                return Err(Error::validation("refine directive needs anomalies"));
            }
            if top.text.is_empty() {
                return Err(Error::validation(
                    "refine directive needs the top principle",
                ));
            }
            Ok(Some(
                TEMPLATE_REFINE
                    .replace("{top_principle_text}", &top.text)
                    .replace("{anomalies}", &render_anomalies(anomalies))
                    .replace("{active_principles}", &render_active(active)),
            ))
        }
        Directive::DiscoverNewPrinciple { anomalies, active } => {
            if anomalies.is_empty() {
                return Err(Error::validation("discover directive needs anomalies"));
            }
            Ok(Some(
                TEMPLATE_DISCOVER
                    .replace("{anomalies}", &render_anomalies(anomalies))
                    .replace("{active_principles}", &render_active(active)),
            ))
        }
        Directive::ExploitHypotheses { task, tested, top } => {
            if top.text.is_empty() {
                return Err(Error::validation(
                    "exploit directive needs the MAP principle",
                ));
            }
            Ok(Some(
                TEMPLATE_EXPLOIT
                    .replace("{task}", task)
                    .replace("{tested_candidates}", &render_tested(tested))
                    .replace("{top_principle_text}", &top.text),
            ))
        }
        Directive::ExploreHypotheses { task, tested } => Ok(Some(
            TEMPLATE_EXPLORE
                .replace("{task}", task)
                .replace("{tested_candidates}", &render_tested(tested))
                .replace("{task_description}", task),
        )),
    }
}

/// A proposed principle. The scripted backend supplies the embedding for
/// texts drawn from the latent library; when absent the engine embeds the
/// text itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipleProposal {
    pub text: String,
    pub embedding: Option<UnitVector<Real>>,
}

/// A proposed hypothesis. World members arrive with id and embedding; novel
/// texts leave both for the engine to assign.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisProposal {
    pub id: Option<HypothesisId>,
    pub text: String,
    pub embedding: Option<UnitVector<Real>>,
}

/// Read-only state the generators may consult.
pub struct GenerationContext<'a> {
    pub store: &'a HypothesisStore,
    pub tested: &'a BTreeSet<HypothesisId>,
    pub pool: &'a BTreeSet<HypothesisId>,
    pub active_texts: &'a BTreeSet<String>,
    pub round: usize,
}

pub trait Generator {
    fn propose_principle(
        &mut self,
        directive: &Directive,
        cx: &GenerationContext,
    ) -> Result<Option<PrincipleProposal>>;

    /// Up to `k` distinct untested hypotheses. Returns fewer when the source
    /// is nearly exhausted and `Error::Exhausted` when nothing remains.
    fn propose_hypotheses(
        &mut self,
        directive: &Directive,
        k: usize,
        cx: &GenerationContext,
    ) -> Result<Vec<HypothesisProposal>>;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Deterministic backend bound to a synthetic world's latent library.
/// Every proposal is a pure function of (directive, world, tested/pool
/// state, seed); the anchor cache below only memoizes dot products against
/// the monotone set of already-proposed hypotheses.
pub struct ScriptedGenerator<'w> {
    pub world: &'w SyntheticWorld,
    pub seed: u64,
    anchored: BTreeSet<HypothesisId>,
    max_dot_to_anchors: Vec<Real>,
}

impl<'w> ScriptedGenerator<'w> {
    pub fn new(world: &'w SyntheticWorld, seed: u64) -> Self {
        let n = world.universe.len();
        ScriptedGenerator {
            world,
            seed,
            anchored: BTreeSet::new(),
            max_dot_to_anchors: vec![Real::NEG_INFINITY; n],
        }
    }

    fn unused_latents(&self, active_texts: &BTreeSet<String>) -> Vec<usize> {
        (0..self.world.latents.len())
            .filter(|i| !active_texts.contains(&self.world.latents[*i].text))
            .collect()
    }

    /// Candidates not yet tested and not already accumulated in the pool.
    fn unproposed(&self, cx: &GenerationContext) -> Vec<usize> {
        (0..self.world.universe.len())
            .filter(|i| {
                let id = &self.world.universe[*i].id;
                !cx.tested.contains(id) && !cx.pool.contains(id)
            })
            .collect()
    }

    fn proposal_for(&self, idx: usize) -> HypothesisProposal {
        let h = &self.world.universe[idx];
        HypothesisProposal {
            id: Some(h.id.clone()),
            text: h.text.clone(),
            embedding: Some(h.embedding.clone()),
        }
    }

    /// Fold newly proposed/tested hypotheses into the max-dot table. The
    /// anchor set (tested plus pool) only ever grows, so this is an exact
    /// incremental evaluation of max over anchors.
    fn sync_anchors(&mut self, cx: &GenerationContext) {
        for id in cx.tested.iter().chain(cx.pool.iter()) {
            if self.anchored.contains(id) {
                continue;
            }
            if let Some(h) = cx.store.get(id) {
                self.anchored.insert(id.clone());
                for (i, u) in self.world.universe.iter().enumerate() {
                    let d = h.embedding.dot(&u.embedding).unwrap_or(1.0);
                    if d > self.max_dot_to_anchors[i] {
                        self.max_dot_to_anchors[i] = d;
                    }
                }
            }
        }
    }
}

/// Text of the deterministic refinement variant the scripted backend
/// produces for a given top principle.
pub fn refined_variant_text(top_text: &str) -> String {
    format!("{top_text}, refined with boundary conditions from anomalous observations")
}

impl<'w> Generator for ScriptedGenerator<'w> {
    fn propose_principle(
        &mut self,
        directive: &Directive,
        cx: &GenerationContext,
    ) -> Result<Option<PrincipleProposal>> {
        match directive {
            Directive::Silent => Ok(None),
            Directive::DiversifyPrinciples { active } => {
                // the unused latent whose embedding has minimal max-dot
                // against the active principles
                let unused = self.unused_latents(cx.active_texts);
                if unused.is_empty() {
                    return Ok(None);
                }
                let mut best = unused[0];
                let mut best_maxdot = Real::INFINITY;
                for &i in &unused {
                    let c = &self.world.latents[i].center;
                    let maxdot = active
                        .iter()
                        .map(|p| p.embedding.dot(c).unwrap_or(1.0))
                        .fold(Real::NEG_INFINITY, Real::max);
                    let maxdot = if active.is_empty() { -1.0 } else { maxdot };
                    if maxdot < best_maxdot {
                        best_maxdot = maxdot;
                        best = i;
                    }
                }
                let l = &self.world.latents[best];
                Ok(Some(PrincipleProposal {
                    text: l.text.clone(),
                    embedding: Some(l.center.clone()),
                }))
            }
            Directive::RefineWithAnomalies { top, anomalies, .. } => {
                if anomalies.is_empty() {
                    return Err(Error::validation("refine directive needs anomalies"));
                }
                let text = refined_variant_text(&top.text);
                if cx.active_texts.contains(&text) {
                    // this refinement already exists; nothing new to say
                    return Ok(None);
                }
                Ok(Some(PrincipleProposal {
                    text,
                    embedding: None,
                }))
            }
            Directive::DiscoverNewPrinciple { anomalies, .. } => {
                if anomalies.is_empty() {
                    return Err(Error::validation("discover directive needs anomalies"));
                }
                let unused = self.unused_latents(cx.active_texts);
                if unused.is_empty() {
                    return Ok(None);
                }
                // mean embedding of the anomalous hypotheses
                let dim = self.world.spec.dim;
                let mut mean = vec![0.0; dim];
                let mut count = 0usize;
                for rec in anomalies {
                    if let Some(h) = cx.store.get(&rec.hypothesis_id) {
                        for (m, v) in mean.iter_mut().zip(h.embedding.as_slice()) {
                            *m += v;
                        }
                        count += 1;
                    }
                }
                if count == 0 {
                    return Err(Error::validation("anomaly payload has no known hypotheses"));
                }
                let target = match UnitVector::normalized(mean) {
                    Ok(u) => u,
                    Err(_) => {
                        let l = &self.world.latents[unused[0]];
                        return Ok(Some(PrincipleProposal {
                            text: l.text.clone(),
                            embedding: Some(l.center.clone()),
                        }));
                    }
                };
                let mut best = unused[0];
                let mut best_dot = Real::NEG_INFINITY;
                for &i in &unused {
                    let d = self.world.latents[i].center.dot(&target)?;
                    if d > best_dot {
                        best_dot = d;
                        best = i;
                    }
                }
                let l = &self.world.latents[best];
                Ok(Some(PrincipleProposal {
                    text: l.text.clone(),
                    embedding: Some(l.center.clone()),
                }))
            }
            _ => Err(Error::validation(
                "hypothesis-facing directive passed to propose_principle",
            )),
        }
    }

    fn propose_hypotheses(
        &mut self,
        directive: &Directive,
        k: usize,
        cx: &GenerationContext,
    ) -> Result<Vec<HypothesisProposal>> {
        if k == 0 {
            return Err(Error::validation("k must be >= 1"));
        }
        let candidates = self.unproposed(cx);
        if candidates.is_empty() {
            return Err(Error::Exhausted);
        }
        match directive {
            Directive::ExploitHypotheses { top, .. } => {
                // k nearest unexecuted hypotheses to the MAP embedding
                let mut scored: Vec<(usize, Real)> = candidates
                    .iter()
                    .map(|&i| {
                        let d = self.world.universe[i]
                            .embedding
                            .dot(&top.embedding)
                            .unwrap_or(-1.0);
                        (i, d)
                    })
                    .collect();
                scored.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(
                            self.world.universe[a.0]
                                .id
                                .cmp(&self.world.universe[b.0].id),
                        )
                });
                Ok(scored
                    .into_iter()
                    .take(k)
                    .map(|(i, _)| self.proposal_for(i))
                    .collect())
            }
            Directive::ExploreHypotheses { .. } => {
                // farthest-point spread over embeddings: anchors are all
                // previously proposed or tested hypotheses, each pick
                // minimizes its maximum dot against the anchor set
                self.sync_anchors(cx);
                let mut remaining = candidates;
                let mut local_max: Vec<Real> = remaining
                    .iter()
                    .map(|&i| self.max_dot_to_anchors[i])
                    .collect();
                let no_anchors_yet = self.anchored.is_empty();
                let mut picks = Vec::new();
                while picks.len() < k && !remaining.is_empty() {
                    let pos = if no_anchors_yet && picks.is_empty() {
                        // seeded start when nothing has been proposed yet
                        let mut stream =
                            rng::stream(self.seed, "explore-start", &[cx.round as u64]);
                        use rand::Rng;
                        stream.gen_range(0..remaining.len())
                    } else {
                        let mut best = 0usize;
                        let mut best_maxdot = Real::INFINITY;
                        for (p, &m) in local_max.iter().enumerate() {
                            if m < best_maxdot {
                                best_maxdot = m;
                                best = p;
                            }
                        }
                        best
                    };
                    let chosen = remaining.remove(pos);
                    local_max.remove(pos);
                    let e = &self.world.universe[chosen].embedding;
                    for (p, &i) in remaining.iter().enumerate() {
                        let d = e.dot(&self.world.universe[i].embedding).unwrap_or(1.0);
                        if d > local_max[p] {
                            local_max[p] = d;
                        }
                    }
                    picks.push(self.proposal_for(chosen));
                }
                Ok(picks)
            }
            _ => Err(Error::validation(
                "principle-facing directive passed to propose_hypotheses",
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// LLM chat-completion backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// History window sent with each request.
    pub context_messages: usize,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub retries: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://localhost:8000/v1/chat/completions".to_string(),
            model: "unset".to_string(),
            temperature: 0.6,
            context_messages: 10,
            api_key_env: "TENET_API_KEY".to_string(),
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

/// Chat-completions client speaking `{model, messages, temperature}` with
/// responses parsed from a fenced JSON block. The rolling message log is
/// truncated to the configured window before every request.
pub struct LlmGenerator<'t> {
    pub cfg: LlmConfig,
    transport: &'t dyn JsonTransport,
    api_key: Option<String>,
    messages: Vec<ChatMessage>,
}

impl<'t> LlmGenerator<'t> {
    pub fn new(cfg: LlmConfig, transport: &'t dyn JsonTransport) -> Self {
        let api_key = std::env::var(&cfg.api_key_env).ok();
        LlmGenerator {
            cfg,
            transport,
            api_key,
            messages: Vec::new(),
        }
    }

    fn chat(&mut self, prompt: &str) -> Result<String> {
        self.messages.push(ChatMessage {
            role: "user".to_string(),
            content: prompt.to_string(),
        });
        let window: Vec<&ChatMessage> = self
            .messages
            .iter()
            .rev()
            .take(self.cfg.context_messages)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": window.iter().map(|m| serde_json::json!({
                "role": m.role, "content": m.content,
            })).collect::<Vec<_>>(),
            "temperature": self.cfg.temperature,
        });
        let resp = post_with_retries(
            self.transport,
            &self.cfg.endpoint,
            self.api_key.as_deref(),
            &body,
            self.cfg.retries,
        )?;
        let content = resp
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .ok_or_else(|| Error::Generation("response missing choices[0].message.content".into()))?
            .to_string();
        self.messages.push(ChatMessage {
            role: "assistant".to_string(),
            content: content.clone(),
        });
        Ok(content)
    }

    /// Number of messages currently retained (for tests).
    pub fn message_log_len(&self) -> usize {
        self.messages.len()
    }
}

/// Extract the first fenced JSON block (```json ... ``` or ``` ... ```), or
/// fall back to parsing the whole string.
pub fn parse_fenced_json(content: &str) -> Result<serde_json::Value> {
    let fenced = content.find("```").and_then(|start| {
        let after = &content[start + 3..];
        let after = after.strip_prefix("json").unwrap_or(after);
        let after = after.strip_prefix('\n').unwrap_or(after);
        after.find("```").map(|end| &after[..end])
    });
    let payload = fenced.unwrap_or(content).trim();
    serde_json::from_str(payload)
        .map_err(|e| Error::Generation(format!("malformed JSON payload: {e}")))
}

const LLM_PARSE_RETRIES: usize = 2;

impl<'t> Generator for LlmGenerator<'t> {
    fn propose_principle(
        &mut self,
        directive: &Directive,
        _cx: &GenerationContext,
    ) -> Result<Option<PrincipleProposal>> {
        let Some(prompt) = render_template(directive)? else {
            return Ok(None);
        };
        let mut last_err = String::new();
        for _ in 0..=LLM_PARSE_RETRIES {
            let content = self.chat(&prompt)?;
            match parse_fenced_json(&content).ok().and_then(|v| {
                v.get("principle_text")
                    .and_then(|t| t.as_str())
                    .map(String::from)
            }) {
                Some(text) if !text.is_empty() => {
                    return Ok(Some(PrincipleProposal {
                        text,
                        embedding: None,
                    }))
                }
                _ => last_err = "missing or empty principle_text".to_string(),
            }
        }
        Err(Error::Generation(format!(
            "principle proposal failed after {} attempts: {last_err}",
            LLM_PARSE_RETRIES + 1
        )))
    }

    fn propose_hypotheses(
        &mut self,
        directive: &Directive,
        k: usize,
        cx: &GenerationContext,
    ) -> Result<Vec<HypothesisProposal>> {
        let Some(prompt) = render_template(directive)? else {
            return Err(Error::validation(
                "silent directive cannot propose hypotheses",
            ));
        };
        let known_texts: BTreeSet<String> = cx
            .tested
            .iter()
            .chain(cx.pool.iter())
            .filter_map(|id| cx.store.get(id).map(|h| h.text.clone()))
            .collect();
        let mut last_err = String::new();
        for _ in 0..=LLM_PARSE_RETRIES {
            let content = self.chat(&prompt)?;
            let parsed = parse_fenced_json(&content).ok().and_then(|v| {
                v.get("hypotheses").and_then(|h| h.as_array()).map(|arr| {
                    arr.iter()
                        .filter_map(|t| t.as_str().map(String::from))
                        .collect::<Vec<_>>()
                })
            });
            match parsed {
                Some(texts) if !texts.is_empty() => {
                    let mut seen = BTreeSet::new();
                    let fresh: Vec<HypothesisProposal> = texts
                        .into_iter()
                        .filter(|t| {
                            !t.is_empty() && !known_texts.contains(t) && seen.insert(t.clone())
                        })
                        .take(k)
                        .map(|text| HypothesisProposal {
                            id: None,
                            text,
                            embedding: None,
                        })
                        .collect();
                    if !fresh.is_empty() {
                        return Ok(fresh);
                    }
                    last_err = "all proposed hypotheses already known".to_string();
                }
                _ => last_err = "missing hypotheses array".to_string(),
            }
        }
        Err(Error::Generation(format!(
            "hypothesis proposal failed after {} attempts: {last_err}",
            LLM_PARSE_RETRIES + 1
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{build_world, WorldSpec};

    fn belief(text: &str, mass: Real, embedding: UnitVector<Real>) -> PrincipleBelief {
        PrincipleBelief {
            id: PrincipleId::numbered(0),
            text: text.to_string(),
            mass,
            embedding,
        }
    }

    fn record(id: &str, score: Real) -> AnomalyRecord {
        AnomalyRecord {
            hypothesis_id: HypothesisId(id.to_string()),
            score,
            residual: 0.4,
            predictive_variance: 0.01,
            round: 2,
        }
    }

    #[test]
    fn diversify_template_contains_header_and_principles() {
        let e = crate::semantic::HashEmbedder::new(0, 8);
        let d = Directive::DiversifyPrinciples {
            active: vec![
                belief("first mechanism", 0.5, e.embed("first mechanism").unwrap()),
                belief(
                    "second mechanism",
                    0.5,
                    e.embed("second mechanism").unwrap(),
                ),
            ],
        };
        let out = render_template(&d).unwrap().unwrap();
        assert!(out.contains("[DIVERSIFYING PRINCIPLE SPACE]"));
        assert!(out.contains("first mechanism"));
        assert!(out.contains("second mechanism"));
        assert!(!out.contains("{active_principles}"));
    }

    #[test]
    fn refine_template_contains_do_not_and_records() {
        let e = crate::semantic::HashEmbedder::new(0, 8);
        let d = Directive::RefineWithAnomalies {
            top: belief("the top idea", 0.9, e.embed("the top idea").unwrap()),
            anomalies: vec![record("c0-001", 0.91), record("c1-004", 0.85)],
            active: vec![],
        };
        let out = render_template(&d).unwrap().unwrap();
        assert!(out.contains("[HIGH CONFIDENCE, LOCAL ANOMALIES]"));
        assert!(out.contains("Do NOT"));
        assert!(out.contains("c0-001"));
        assert!(out.contains("c1-004"));
    }

    #[test]
    fn silent_emits_nothing() {
        assert_eq!(render_template(&Directive::Silent).unwrap(), None);
    }

    #[test]
    fn refine_requires_anomalies() {
        let e = crate::semantic::HashEmbedder::new(0, 8);
        let d = Directive::RefineWithAnomalies {
            top: belief("t", 0.9, e.embed("t").unwrap()),
            anomalies: vec![],
            active: vec![],
        };
        assert!(render_template(&d).is_err());
    }

    #[test]
    fn headers_distinguish_every_tag() {
        let e = crate::semantic::HashEmbedder::new(0, 8);
        let emb = e.embed("x").unwrap();
        let rendered: Vec<String> = [
            Directive::DiversifyPrinciples { active: vec![] },
            Directive::RefineWithAnomalies {
                top: belief("x", 1.0, emb.clone()),
                anomalies: vec![record("a", 0.9)],
                active: vec![],
            },
            Directive::DiscoverNewPrinciple {
                anomalies: vec![record("a", 0.9)],
                active: vec![],
            },
            Directive::ExploitHypotheses {
                task: "task".into(),
                tested: vec![],
                top: belief("x", 1.0, emb.clone()),
            },
            Directive::ExploreHypotheses {
                task: "task".into(),
                tested: vec![],
            },
        ]
        .iter()
        .map(|d| render_template(d).unwrap().unwrap())
        .collect();
        for (i, a) in rendered.iter().enumerate() {
            for (j, b) in rendered.iter().enumerate() {
                if i != j {
                    assert_ne!(a, b);
                }
            }
        }
        assert!(rendered[0].contains("[DIVERSIFYING PRINCIPLE SPACE]"));
        assert!(rendered[1].contains("[HIGH CONFIDENCE, LOCAL ANOMALIES]"));
        assert!(rendered[2].contains("[LOW CONFIDENCE, SYSTEMATIC FAILURES]"));
        assert!(rendered[3].contains("TARGET SCIENTIFIC PRINCIPLE"));
        assert!(rendered[4].contains("Provide exploratory candidate hypotheses"));
    }

    fn test_world() -> SyntheticWorld {
        build_world(&WorldSpec {
            clusters: 3,
            hypotheses_per_cluster: 6,
            seed: 7,
            true_index: Some(1),
            ..WorldSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn scripted_silent_and_exhaustion() {
        let w = test_world();
        let mut g = ScriptedGenerator::new(&w, 0);
        let store = w.hypothesis_store();
        let all_texts: BTreeSet<String> = w.latents.iter().map(|l| l.text.clone()).collect();
        let empty_ids = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &empty_ids,
            pool: &empty_ids,
            active_texts: &all_texts,
            round: 0,
        };
        assert_eq!(g.propose_principle(&Directive::Silent, &cx).unwrap(), None);
        // library exhausted: every latent already active
        let d = Directive::DiversifyPrinciples { active: vec![] };
        assert_eq!(g.propose_principle(&d, &cx).unwrap(), None);
    }

    #[test]
    fn scripted_discover_targets_nearest_latent() {
        let w = test_world();
        let mut g = ScriptedGenerator::new(&w, 0);
        let store = w.hypothesis_store();
        let empty_ids = BTreeSet::new();
        // anomalies clustered in latent cluster 2's members
        let anomalies: Vec<AnomalyRecord> = w
            .universe
            .iter()
            .filter(|h| h.cluster == 2)
            .take(4)
            .map(|h| record(&h.id.0, 0.9))
            .collect();
        let active_texts: BTreeSet<String> = [w.latents[0].text.clone()].into();
        let cx = GenerationContext {
            store: &store,
            tested: &empty_ids,
            pool: &empty_ids,
            active_texts: &active_texts,
            round: 3,
        };
        let d = Directive::DiscoverNewPrinciple {
            anomalies,
            active: vec![],
        };
        let prop = g.propose_principle(&d, &cx).unwrap().unwrap();
        assert_eq!(prop.text, w.latents[2].text);
        assert_eq!(prop.embedding.unwrap(), w.latents[2].center);
    }

    #[test]
    fn scripted_refine_is_once_per_top_text() {
        let w = test_world();
        let mut g = ScriptedGenerator::new(&w, 0);
        let store = w.hypothesis_store();
        let empty_ids = BTreeSet::new();
        let e = crate::semantic::HashEmbedder::new(0, 8);
        let top = belief("leading idea", 0.8, e.embed("leading idea").unwrap());
        let d = Directive::RefineWithAnomalies {
            top: top.clone(),
            anomalies: vec![record("c0-000", 0.95)],
            active: vec![],
        };
        let none: BTreeSet<String> = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &empty_ids,
            pool: &empty_ids,
            active_texts: &none,
            round: 1,
        };
        let p = g.propose_principle(&d, &cx).unwrap().unwrap();
        assert_eq!(p.text, refined_variant_text("leading idea"));
        // once the variant is active the scripted backend stays quiet
        let with: BTreeSet<String> = [p.text.clone()].into();
        let cx2 = GenerationContext {
            active_texts: &with,
            ..cx
        };
        assert_eq!(g.propose_principle(&d, &cx2).unwrap(), None);
    }

    #[test]
    fn scripted_exploit_stays_in_map_cluster() {
        let w = test_world();
        let mut g = ScriptedGenerator::new(&w, 0);
        let store = w.hypothesis_store();
        let empty_ids = BTreeSet::new();
        let none = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &empty_ids,
            pool: &empty_ids,
            active_texts: &none,
            round: 5,
        };
        let top = PrincipleBelief {
            id: PrincipleId::numbered(1),
            text: w.latents[1].text.clone(),
            mass: 0.9,
            embedding: w.latents[1].center.clone(),
        };
        let d = Directive::ExploitHypotheses {
            task: "t".into(),
            tested: vec![],
            top,
        };
        let props = g.propose_hypotheses(&d, 3, &cx).unwrap();
        assert_eq!(props.len(), 3);
        for p in &props {
            let h = w.find(p.id.as_ref().unwrap()).unwrap();
            assert_eq!(
                h.cluster, 1,
                "exploit proposals should lie in the MAP cluster"
            );
        }
    }

    #[test]
    fn scripted_explore_spreads_across_clusters() {
        let w = test_world();
        let mut g = ScriptedGenerator::new(&w, 3);
        let store = w.hypothesis_store();
        let empty_ids = BTreeSet::new();
        let none = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &empty_ids,
            pool: &empty_ids,
            active_texts: &none,
            round: 0,
        };
        let d = Directive::ExploreHypotheses {
            task: "t".into(),
            tested: vec![],
        };
        let props = g.propose_hypotheses(&d, 3, &cx).unwrap();
        assert_eq!(props.len(), 3);
        let clusters: BTreeSet<usize> = props
            .iter()
            .map(|p| w.find(p.id.as_ref().unwrap()).unwrap().cluster)
            .collect();
        assert_eq!(clusters.len(), 3, "3 picks across 3 clusters: one each");

        // independent greedy farthest-point oracle over the same frozen set
        let oracle = explore_oracle(&w, 3, 3, 0);
        let got: Vec<&HypothesisId> = props.iter().map(|p| p.id.as_ref().unwrap()).collect();
        assert_eq!(got, oracle.iter().collect::<Vec<_>>());
    }

    // brute-force re-implementation of the farthest-point heuristic
    fn explore_oracle(w: &SyntheticWorld, k: usize, seed: u64, round: u64) -> Vec<HypothesisId> {
        let mut anchors: Vec<usize> = Vec::new();
        let mut picks = Vec::new();
        let mut remaining: Vec<usize> = (0..w.universe.len()).collect();
        for _ in 0..k {
            let chosen = if anchors.is_empty() {
                use rand::Rng;
                let mut s = crate::rng::stream(seed, "explore-start", &[round]);
                remaining[s.gen_range(0..remaining.len())]
            } else {
                *remaining
                    .iter()
                    .min_by(|&&a, &&b| {
                        let ma = anchors
                            .iter()
                            .map(|&x| {
                                w.universe[x]
                                    .embedding
                                    .dot(&w.universe[a].embedding)
                                    .unwrap()
                            })
                            .fold(f64::NEG_INFINITY, f64::max);
                        let mb = anchors
                            .iter()
                            .map(|&x| {
                                w.universe[x]
                                    .embedding
                                    .dot(&w.universe[b].embedding)
                                    .unwrap()
                            })
                            .fold(f64::NEG_INFINITY, f64::max);
                        ma.partial_cmp(&mb).unwrap()
                    })
                    .unwrap()
            };
            anchors.push(chosen);
            remaining.retain(|&i| i != chosen);
            picks.push(w.universe[chosen].id.clone());
        }
        picks
    }

    #[test]
    fn scripted_proposals_never_repeat_memory() {
        let w = test_world();
        let mut g = ScriptedGenerator::new(&w, 0);
        let store = w.hypothesis_store();
        let tested: BTreeSet<HypothesisId> =
            w.universe.iter().take(10).map(|h| h.id.clone()).collect();
        let pool: BTreeSet<HypothesisId> = w
            .universe
            .iter()
            .skip(10)
            .take(4)
            .map(|h| h.id.clone())
            .collect();
        let none = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &tested,
            pool: &pool,
            active_texts: &none,
            round: 2,
        };
        let d = Directive::ExploreHypotheses {
            task: "t".into(),
            tested: vec![],
        };
        let props = g.propose_hypotheses(&d, 3, &cx).unwrap();
        for p in &props {
            let id = p.id.as_ref().unwrap();
            assert!(!tested.contains(id) && !pool.contains(id));
        }
    }

    #[test]
    fn scripted_exhaustion_error_when_universe_consumed() {
        let w = test_world();
        let mut g = ScriptedGenerator::new(&w, 0);
        let store = w.hypothesis_store();
        let tested: BTreeSet<HypothesisId> = w.universe.iter().map(|h| h.id.clone()).collect();
        let empty = BTreeSet::new();
        let none = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &tested,
            pool: &empty,
            active_texts: &none,
            round: 9,
        };
        let d = Directive::ExploreHypotheses {
            task: "t".into(),
            tested: vec![],
        };
        assert!(matches!(
            g.propose_hypotheses(&d, 3, &cx),
            Err(Error::Exhausted)
        ));
    }

    #[test]
    fn fenced_json_parsing_variants() {
        let fenced = "thinking...\n```json\n{\"principle_text\": \"a law\"}\n```\ndone";
        let v = parse_fenced_json(fenced).unwrap();
        assert_eq!(v["principle_text"], "a law");
        let bare = "{\"hypotheses\": [\"h1\", \"h2\"]}";
        assert!(parse_fenced_json(bare).is_ok());
        assert!(parse_fenced_json("no json here").is_err());
    }

    #[test]
    fn llm_generator_retries_then_errors_on_malformed() {
        use crate::transport::testing::MockTransport;
        let bad = |s: &str| {
            Ok(serde_json::json!({
                "choices": [{"message": {"content": s}}]
            }))
        };
        let mock = MockTransport::new(vec![bad("junk"), bad("junk"), bad("junk")]);
        let mut g = LlmGenerator::new(
            LlmConfig {
                retries: 0,
                ..LlmConfig::default()
            },
            &mock,
        );
        let w = test_world();
        let store = w.hypothesis_store();
        let empty = BTreeSet::new();
        let none = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &empty,
            pool: &empty,
            active_texts: &none,
            round: 0,
        };
        let d = Directive::DiversifyPrinciples { active: vec![] };
        let err = g.propose_principle(&d, &cx).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
        assert_eq!(
            mock.seen.lock().unwrap().len(),
            3,
            "initial try plus two retries"
        );
    }

    #[test]
    fn llm_context_window_truncates_to_ten() {
        use crate::transport::testing::MockTransport;
        let good = Ok(serde_json::json!({
            "choices": [{"message": {"content": "```json\n{\"principle_text\": \"p\"}\n```"}}]
        }));
        let responses = (0..12).map(|_| good.clone()).collect();
        let mock = MockTransport::new(responses);
        let mut g = LlmGenerator::new(LlmConfig::default(), &mock);
        let w = test_world();
        let store = w.hypothesis_store();
        let empty = BTreeSet::new();
        let none = BTreeSet::new();
        let cx = GenerationContext {
            store: &store,
            tested: &empty,
            pool: &empty,
            active_texts: &none,
            round: 0,
        };
        let d = Directive::DiversifyPrinciples { active: vec![] };
        for _ in 0..12 {
            g.propose_principle(&d, &cx).unwrap();
        }
        let seen = mock.seen.lock().unwrap();
        let last = seen.last().unwrap();
        let sent = last["messages"].as_array().unwrap();
        assert_eq!(sent.len(), 10, "ten most recent messages");
        assert_eq!(last["temperature"], 0.6);
    }
}
