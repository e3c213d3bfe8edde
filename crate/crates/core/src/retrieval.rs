//! Embedding-based tool retrieval with an automatic relevance cutoff.
//!
//! A query is embedded, candidate tools are ranked by cosine similarity, and
//! the retained prefix is chosen by two independent detectors run over the
//! sorted score list:
//!
//! - jump detection: the largest drop between consecutive scores marks the
//!   boundary between relevant and irrelevant tools;
//! - curvature detection: the cumulative score mass is normalized against a
//!   uniform ramp, and the point of maximum deviation marks diminishing
//!   returns.
//!
//! The final cutoff is the smaller of the two, lifted to a configured floor
//! so prompts never starve for options. Both detectors break ties toward the
//! earliest index and are deterministic on equal input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{Embedder, ProviderError};
use crate::toolhost::ToolSchema;

/// A nonempty embedding. Dimension is the length of the value slice, so the
/// two can never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::EmptyVector);
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Knobs for ranking and cutoff. Fields left out of a config file keep
/// their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// How many candidates enter cutoff detection.
    pub top_m: usize,
    /// Floor on the retained count; short lists keep everything.
    pub min_retained: usize,
    /// Smallest score drop that counts as a jump.
    pub jump_min_gap: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            top_m: 50,
            min_retained: 10,
            jump_min_gap: 0.05,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.top_m == 0 {
            return Err(RetrievalError::InvalidConfig(
                "top_m must be at least 1".to_string(),
            ));
        }
        if self.min_retained == 0 || self.min_retained > self.top_m {
            return Err(RetrievalError::InvalidConfig(
                "min_retained must be in 1..=top_m".to_string(),
            ));
        }
        if !(self.jump_min_gap > 0.0 && self.jump_min_gap <= 1.0) {
            return Err(RetrievalError::InvalidConfig(
                "jump_min_gap must be in (0, 1]".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding vector must be nonempty")]
    EmptyVector,
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("{op} needs at least {needed} scores, got {got}")]
    TooFewScores {
        op: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("tool index is empty")]
    EmptyIndex,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Cosine similarity in [-1, 1]. Zero-norm vectors are rejected rather than
/// silently scored.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dimension() != b.dimension() {
        return Err(RetrievalError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// A candidate with its similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTool {
    pub name: String,
    pub score: f64,
}

/// Index position of the largest drop between consecutive scores, reported
/// as the number of items to keep. Drops smaller than `jump_min_gap`
/// everywhere mean no boundary exists and the whole list is kept. Ties keep
/// the earliest drop.
pub fn detect_jump(scores: &[f64], jump_min_gap: f64) -> Result<usize, RetrievalError> {
    if scores.len() < 2 {
        return Err(RetrievalError::TooFewScores {
            op: "detect_jump",
            needed: 2,
            got: scores.len(),
        });
    }
    let mut best_idx = 0usize;
    let mut best_gap = f64::NEG_INFINITY;
    for i in 0..scores.len() - 1 {
        let gap = scores[i] - scores[i + 1];
        if gap > best_gap {
            best_gap = gap;
            best_idx = i;
        }
    }
    if best_gap < jump_min_gap {
        return Ok(scores.len());
    }
    Ok(best_idx + 1)
}

/// Curvature cutoff over a descending score list. Negative scores are
/// treated as zero mass. The cumulative fraction y_i is compared against the
/// uniform ramp x_i = (i+1)/n; the first index of maximum deviation is the
/// keep count. A flat curve (every deviation within 1e-12, e.g. all-equal
/// scores) has no knee, so the whole list is kept.
pub fn detect_kneedle(scores: &[f64]) -> Result<usize, RetrievalError> {
    let n = scores.len();
    if n < 3 {
        return Err(RetrievalError::TooFewScores {
            op: "detect_kneedle",
            needed: 3,
            got: n,
        });
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut running = 0.0f64;
    for &s in scores {
        running += s.max(0.0);
        cumulative.push(running);
    }
    let total = running;
    if total <= 0.0 {
        return Ok(n);
    }
    let mut best_idx = 0usize;
    let mut best_dev = f64::NEG_INFINITY;
    for (i, &c) in cumulative.iter().enumerate() {
        let x = (i + 1) as f64 / n as f64;
        let y = c / total;
        let dev = y - x;
        if dev > best_dev {
            best_dev = dev;
            best_idx = i;
        }
    }
    if best_dev <= 1e-12 {
        return Ok(n);
    }
    Ok(best_idx + 1)
}

/// Embedded candidate set, ready to answer selection queries.
pub struct ToolIndex {
    entries: Vec<(String, EmbeddingVector)>,
}

/// Outcome of one selection: the ranked window, both detector votes, and the
/// retained prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub ranked: Vec<ScoredTool>,
    pub n_jump: usize,
    pub n_kneedle: usize,
    pub n_final: usize,
    pub retained: Vec<String>,
}

impl ToolIndex {
    /// Embeds each tool's retrieval text (name, enriched description, and
    /// category). Index order follows input order.
    pub fn build(tools: &[ToolSchema], embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        let mut entries = Vec::with_capacity(tools.len());
        for tool in tools {
            let embedding = embedder.embed(&tool.retrieval_text())?;
            entries.push((tool.tool_name.clone(), embedding));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ranks every candidate against the query and keeps the top window.
    /// Ties are broken by name so equal scores rank deterministically.
    pub fn rank(
        &self,
        query: &str,
        top_m: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ScoredTool>, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let query_vec = embedder.embed(query)?;
        let mut scored = Vec::with_capacity(self.entries.len());
        for (name, embedding) in &self.entries {
            let score = cosine_similarity(&query_vec, embedding)?;
            scored.push(ScoredTool {
                name: name.clone(),
                score,
            });
        }
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.name.cmp(&b.name))
        });
        scored.truncate(top_m);
        Ok(scored)
    }

    /// Full selection: rank, run both detectors, take the smaller vote, and
    /// lift to the configured floor (capped at the candidate count).
    pub fn select(
        &self,
        query: &str,
        config: &RetrievalConfig,
        embedder: &dyn Embedder,
    ) -> Result<Selection, RetrievalError> {
        config.validate()?;
        let ranked = self.rank(query, config.top_m, embedder)?;
        let scores: Vec<f64> = ranked.iter().map(|t| t.score).collect();
        let n = scores.len();
        let n_jump = if n < 2 {
            n
        } else {
            detect_jump(&scores, config.jump_min_gap)?
        };
        let n_kneedle = if n < 3 { n } else { detect_kneedle(&scores)? };
        let mut n_final = n_jump.min(n_kneedle);
        if n_final < config.min_retained {
            n_final = config.min_retained.min(n);
        }
        let retained = ranked[..n_final].iter().map(|t| t.name.clone()).collect();
        Ok(Selection {
            ranked,
            n_jump,
            n_kneedle,
            n_final,
            retained,
        })
    }
}
