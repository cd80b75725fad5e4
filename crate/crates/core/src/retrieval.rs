//! Query-time retrieval: greedy descent of the memory tree by caption
//! similarity, top-1 dialogue recall, and assembly of the prompt bundle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::memory::{DialogueEntry, DialogueMemory, MemorySnapshot, MemoryTree};
use crate::ports::TextEncoder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Minimum cosine similarity for a dialogue turn to be recalled.
    pub min_sim: f64,
    /// Turns returned by [`retrieve_dialogue_top_k`]; the bundle carries the best one.
    pub dialogue_top_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            min_sim: 0.35,
            dialogue_top_k: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryVec {
    pub vec: Vec<f64>,
    pub text: String,
}

impl QueryVec {
    pub fn new(text: impl Into<String>, vec: Vec<f64>) -> Result<Self> {
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query vector"));
        }
        Ok(Self { vec, text: text.into() })
    }

    pub fn encode(text: &str, encoder: &dyn TextEncoder) -> Result<Self> {
        Self::new(text, encoder.encode(text)?)
    }
}

/// Cosine similarity; a zero vector on either side gives 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(a.len(), b.len()));
    }
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub level: usize,
    pub index: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    /// Visited nodes from the topmost level down to level 0.
    pub steps: Vec<PathStep>,
    /// Centroids of every visited node, in the same order as `steps`.
    #[serde(skip)]
    pub collected_centroids: Vec<Matrix>,
    pub best_caption: String,
    /// Number of caption similarities evaluated.
    pub nodes_scanned: usize,
}

impl PathResult {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Index and score of the best-scoring node; ties keep the earliest.
fn argmax<'a>(q: &[f64], candidates: impl Iterator<Item = (usize, &'a [f64])>) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for (i, key) in candidates {
        let s = cosine_similarity(q, key)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    Ok(best)
}

/// Greedy per-level descent: pick the best caption on the topmost level, then
/// the best child at each level below, collecting centroids along the way.
pub fn descend_tree(tree: &MemoryTree, q: &QueryVec) -> Result<PathResult> {
    let Some(top) = tree.top_level() else {
        return Ok(PathResult::default());
    };
    let mut result = PathResult::default();
    let mut range = 0..tree.level(top).len();
    for level in (0..=top).rev() {
        let nodes = tree.level(level);
        result.nodes_scanned += range.len();
        let (index, similarity) = argmax(&q.vec, range.clone().map(|i| (i, nodes[i].caption_vec.as_slice())))?
            .expect("every visited range is nonempty");
        let node = &nodes[index];
        result.steps.push(PathStep {
            level,
            index,
            similarity,
        });
        result.collected_centroids.push(node.centroids.clone());
        if level == 0 {
            result.best_caption = node.caption.clone();
        } else {
            range = node.children.clone().expect("upper-level nodes have children");
        }
    }
    Ok(result)
}

/// All turns at or above `min_sim`, best first, at most `k`. Ties prefer the most recent turn.
pub fn retrieve_dialogue_top_k(
    mem: &DialogueMemory,
    q: &QueryVec,
    min_sim: f64,
    k: usize,
) -> Result<Vec<(Arc<DialogueEntry>, f64)>> {
    let mut scored = Vec::with_capacity(mem.len());
    for e in mem.entries() {
        let s = cosine_similarity(&q.vec, &e.vec)?;
        if s >= min_sim {
            scored.push((Arc::clone(e), s));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.turn_index.cmp(&a.0.turn_index)));
    scored.truncate(k);
    Ok(scored)
}

/// Exact top-1 dialogue recall.
pub fn retrieve_dialogue(
    mem: &DialogueMemory,
    q: &QueryVec,
    min_sim: f64,
) -> Result<Option<(Arc<DialogueEntry>, f64)>> {
    Ok(retrieve_dialogue_top_k(mem, q, min_sim, 1)?.into_iter().next())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueContext {
    pub turn_index: usize,
    pub question: String,
    pub answer: String,
    pub similarity: f64,
}

/// Everything handed to the generator for one question.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptBundle {
    pub question: String,
    pub snapshot_version: u64,
    pub short_term: Vec<Matrix>,
    pub short_term_timestamps: Vec<f64>,
    pub tree_tokens: Vec<Matrix>,
    pub path: PathResult,
    pub dialogue_context: Option<DialogueContext>,
}

impl PromptBundle {
    /// Token rows handed to the generator.
    pub fn token_rows(&self) -> usize {
        self.short_term.iter().chain(&self.tree_tokens).map(Matrix::rows).sum()
    }

    /// JSON form. Matrices appear as shape + digest unless `verbose`.
    pub fn to_json(&self, verbose: bool) -> Value {
        let matrix = |m: &Matrix| {
            if verbose {
                json!({ "shape": [m.rows(), m.cols()], "digest": m.digest(), "values": m })
            } else {
                json!({ "shape": [m.rows(), m.cols()], "digest": m.digest() })
            }
        };
        let short_term: Vec<Value> = self
            .short_term
            .iter()
            .zip(&self.short_term_timestamps)
            .map(|(m, t)| {
                let mut v = matrix(m);
                v["timestamp"] = json!(t);
                v
            })
            .collect();
        let tree_tokens: Vec<Value> = self
            .tree_tokens
            .iter()
            .zip(&self.path.steps)
            .map(|(m, step)| {
                let mut v = matrix(m);
                v["level"] = json!(step.level);
                v["index"] = json!(step.index);
                v["similarity"] = json!(step.similarity);
                v
            })
            .collect();
        json!({
            "question": self.question,
            "snapshot_version": self.snapshot_version,
            "short_term": short_term,
            "tree_tokens": tree_tokens,
            "best_caption": self.path.best_caption,
            "nodes_scanned": self.path.nodes_scanned,
            "dialogue_context": self.dialogue_context,
        })
    }

    /// SHA-256 of the verbose JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(&self.to_json(true)).expect("bundle serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Gather short-term memory, the tree path and the recalled dialogue turn. Pure.
pub fn assemble_context(snapshot: &MemorySnapshot, q: &QueryVec, cfg: &RetrievalConfig) -> Result<PromptBundle> {
    let path = descend_tree(&snapshot.tree, q)?;
    let dialogue_context =
        retrieve_dialogue(&snapshot.dialogue, q, cfg.min_sim)?.map(|(e, similarity)| DialogueContext {
            turn_index: e.turn_index,
            question: e.question.clone(),
            answer: e.answer.clone(),
            similarity,
        });
    Ok(PromptBundle {
        question: q.text.clone(),
        snapshot_version: snapshot.version,
        short_term: snapshot.short_term.units.iter().map(|u| u.tokens.clone()).collect(),
        short_term_timestamps: snapshot.short_term.units.iter().map(|u| u.source_timestamp).collect(),
        tree_tokens: path.collected_centroids.clone(),
        path,
        dialogue_context,
    })
}
