//! The three memories (short-term, long-term tree, dialogue) and the store
//! that mutates them and hands out immutable snapshots.

mod chunk;
mod dialogue;
pub mod kmeans;
mod short_term;
mod tree;

pub use chunk::{Chunk, Span};
pub use dialogue::{turn_text, DialogueEntry, DialogueMemory};
pub use kmeans::{kmeans, kmeans_restarts, KMeansResult};
pub use short_term::{forgetting_weights, refresh_short_term, ShortTermMemory};
pub use tree::{expected_level_sizes, make_unit, LongMemoryUnit, MemoryTree};

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_gate::VisionEmbedding;
use crate::hashing::derive_seed;
use crate::ports::PortSet;

const SEED_SHORT_TERM: u64 = 0x7368_6f72;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    /// Motion threshold `t` used by the frame gate.
    pub threshold: f64,
    /// Chunk length `L`.
    pub chunk_len: usize,
    /// Group size `g`.
    pub group_size: usize,
    /// Clustering goal `C`.
    pub cluster_goal: usize,
    /// Short-term memory length `S`.
    pub short_len: usize,
    /// Candidate pool length `N` for short-term sampling.
    pub candidate_len: usize,
    pub forgetting_scale: f64,
    pub seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_restarts: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            threshold: 0.35,
            chunk_len: 25,
            group_size: 10,
            cluster_goal: 5,
            short_len: 5,
            candidate_len: 20,
            forgetting_scale: 5.0,
            seed: 0,
            kmeans_max_iter: kmeans::DEFAULT_MAX_ITER,
            kmeans_restarts: kmeans::DEFAULT_RESTARTS,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("threshold must be in [0,1]"));
        }
        if self.chunk_len < 1 {
            return Err(Error::invalid("chunk_len must be >= 1"));
        }
        if self.group_size < 2 {
            return Err(Error::invalid("group_size must be >= 2"));
        }
        if self.cluster_goal < 1 {
            return Err(Error::invalid("cluster_goal must be >= 1"));
        }
        if self.short_len < 1 || self.short_len > self.candidate_len {
            return Err(Error::invalid("need 1 <= short_len <= candidate_len"));
        }
        if !(self.forgetting_scale > 0.0) {
            return Err(Error::invalid("forgetting_scale must be > 0"));
        }
        if self.kmeans_max_iter < 1 || self.kmeans_restarts < 1 {
            return Err(Error::invalid("kmeans_max_iter and kmeans_restarts must be >= 1"));
        }
        Ok(())
    }
}

/// Work counters for one memory update; the simulated clock prices them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkStats {
    pub kmeans_work: u64,
    pub captions: u32,
    /// Items read by the captioner: token rows for a chunk, child captions for a summary.
    pub caption_inputs: u64,
    pub text_encodes: u32,
}

impl std::ops::AddAssign for WorkStats {
    fn add_assign(&mut self, rhs: Self) {
        self.kmeans_work += rhs.kmeans_work;
        self.captions += rhs.captions;
        self.caption_inputs += rhs.caption_inputs;
        self.text_encodes += rhs.text_encodes;
    }
}

/// Immutable view of all three memories at one version.
#[derive(Clone, Debug)]
pub struct MemorySnapshot {
    pub version: u64,
    pub short_term: Arc<ShortTermMemory>,
    pub tree: Arc<MemoryTree>,
    pub dialogue: Arc<DialogueMemory>,
}

impl PartialEq for MemorySnapshot {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && *self.short_term == *other.short_term
            && *self.tree == *other.tree
            && *self.dialogue == *other.dialogue
    }
}

/// What a committed update changed. Versions increase by one per update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryUpdate {
    Chunk { index: u64 },
    Dialogue { turn: usize },
}

/// Owner of the mutable memories. Updates are all-or-nothing: on error the
/// previous state is kept.
#[derive(Debug)]
pub struct MemoryStore {
    cfg: MemoryConfig,
    version: u64,
    short_term: Arc<ShortTermMemory>,
    tree: Arc<MemoryTree>,
    dialogue: Arc<DialogueMemory>,
    recent: VecDeque<VisionEmbedding>,
}

impl MemoryStore {
    pub fn new(cfg: MemoryConfig) -> Result<Self> {
        cfg.validate()?;
        let tree = MemoryTree::new(cfg.group_size)?;
        Ok(Self {
            recent: VecDeque::with_capacity(cfg.candidate_len),
            cfg,
            version: 0,
            short_term: Arc::default(),
            tree: Arc::new(tree),
            dialogue: Arc::default(),
        })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.cfg
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn tree(&self) -> &MemoryTree {
        &self.tree
    }

    /// Cluster and caption a flushed chunk, grow the tree, and resample short-term memory.
    pub fn apply_chunk(&mut self, chunk: &Chunk, ports: &PortSet, now: f64) -> Result<WorkStats> {
        let (unit, mut stats) = make_unit(chunk, &self.cfg, ports.captioner.as_ref(), ports.text_encoder.as_ref())?;
        let mut tree = (*self.tree).clone();
        stats += tree.append_unit(unit, &self.cfg, ports.captioner.as_ref(), ports.text_encoder.as_ref())?;

        let mut recent = self.recent.clone();
        for e in chunk.embeddings() {
            if recent.len() == self.cfg.candidate_len {
                recent.pop_front();
            }
            recent.push_back(e.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, &[SEED_SHORT_TERM, chunk.index]));
        let short_term = refresh_short_term(recent.make_contiguous(), &self.cfg, &mut rng, now)?;

        self.tree = Arc::new(tree);
        self.recent = recent;
        self.short_term = Arc::new(short_term);
        self.version += 1;
        Ok(stats)
    }

    pub fn apply_dialogue(&mut self, question: &str, answer: &str, ports: &PortSet, now: f64) -> Result<usize> {
        let mut dialogue = (*self.dialogue).clone();
        let turn = dialogue
            .append(question, answer, ports.text_encoder.as_ref(), now)?
            .turn_index;
        self.dialogue = Arc::new(dialogue);
        self.version += 1;
        Ok(turn)
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        MemorySnapshot {
            version: self.version,
            short_term: Arc::clone(&self.short_term),
            tree: Arc::clone(&self.tree),
            dialogue: Arc::clone(&self.dialogue),
        }
    }
}
