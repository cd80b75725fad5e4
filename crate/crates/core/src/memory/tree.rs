//! Long-memory tree: level 0 holds one unit per chunk in chronological order;
//! each higher level groups `g` consecutive nodes, re-clustering their
//! centroids and summarizing their captions.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::matrix::Matrix;
use crate::memory::kmeans::kmeans_restarts;
use crate::memory::{Chunk, MemoryConfig, Span, WorkStats};
use crate::ports::{Captioner, TextEncoder};

const TREE_FORMAT: &str = "streammem-tree";
const TREE_FORMAT_VERSION: u32 = 1;

const SEED_UNIT: u64 = 0x756e_6974;
const SEED_PARENT: u64 = 0x7061_7265;

/// A tree node: clustered centroids plus the caption used as a retrieval key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongMemoryUnit {
    pub centroids: Matrix,
    pub caption: String,
    pub caption_vec: Vec<f64>,
    pub span: Span,
    pub level: usize,
    /// Child index range in the level below; `None` for level-0 units.
    #[serde(default)]
    pub children: Option<Range<usize>>,
}

/// Cluster a chunk's token rows and caption it.
pub fn make_unit(
    chunk: &Chunk,
    cfg: &MemoryConfig,
    captioner: &dyn Captioner,
    encoder: &dyn TextEncoder,
) -> Result<(LongMemoryUnit, WorkStats)> {
    let rows = chunk.token_rows()?;
    let seed = derive_seed(cfg.seed, &[SEED_UNIT, chunk.index]);
    let km = kmeans_restarts(&rows, cfg.cluster_goal, seed, cfg.kmeans_max_iter, cfg.kmeans_restarts)?;
    let span = chunk.span();
    let ctx = || format!("chunk {} span [{}, {}]", chunk.index, span.start, span.end);
    let caption = captioner.caption_chunk(chunk).map_err(|e| e.with_context(&ctx()))?;
    if caption.is_empty() {
        return Err(Error::Protocol {
            endpoint: "caption".into(),
            message: format!("empty caption for {}", ctx()),
        });
    }
    let caption_vec = encoder.encode(&caption).map_err(|e| e.with_context(&ctx()))?;
    let stats = WorkStats {
        kmeans_work: km.work,
        captions: 1,
        caption_inputs: rows.rows() as u64,
        text_encodes: 1,
    };
    Ok((
        LongMemoryUnit {
            centroids: km.centroids,
            caption,
            caption_vec,
            span,
            level: 0,
            children: None,
        },
        stats,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryTree {
    group_size: usize,
    levels: Vec<Vec<Arc<LongMemoryUnit>>>,
}

/// Level sizes the tree must have after `basic` level-0 appends.
pub fn expected_level_sizes(basic: usize, group_size: usize) -> Vec<usize> {
    if basic == 0 {
        return Vec::new();
    }
    let mut sizes = vec![basic];
    while let Some(&last) = sizes.last() {
        if last <= group_size {
            break;
        }
        sizes.push(last.div_ceil(group_size));
    }
    sizes
}

impl MemoryTree {
    pub fn new(group_size: usize) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::invalid("group size must be >= 2"));
        }
        Ok(Self {
            group_size,
            levels: Vec::new(),
        })
    }

    /// Assemble a tree from explicit levels, validating every structural invariant.
    pub fn from_levels(group_size: usize, levels: Vec<Vec<LongMemoryUnit>>) -> Result<Self> {
        let mut tree = Self::new(group_size)?;
        tree.levels = levels
            .into_iter()
            .map(|l| l.into_iter().map(Arc::new).collect())
            .collect();
        tree.check_invariants().map_err(Error::InvalidInput)?;
        Ok(tree)
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn level(&self, k: usize) -> &[Arc<LongMemoryUnit>] {
        &self.levels[k]
    }

    pub fn node(&self, level: usize, index: usize) -> &LongMemoryUnit {
        &self.levels[level][index]
    }

    /// Index of the topmost materialized level. Retrieval scans it first.
    pub fn top_level(&self) -> Option<usize> {
        self.levels.len().checked_sub(1)
    }

    pub fn basic_units(&self) -> &[Arc<LongMemoryUnit>] {
        self.levels.first().map_or(&[], Vec::as_slice)
    }

    /// Push a level-0 unit and rebuild every ancestor whose children changed.
    pub fn append_unit(
        &mut self,
        unit: LongMemoryUnit,
        cfg: &MemoryConfig,
        captioner: &dyn Captioner,
        encoder: &dyn TextEncoder,
    ) -> Result<WorkStats> {
        if unit.level != 0 || unit.children.is_some() {
            return Err(Error::invalid("only level-0 units can be appended"));
        }
        if let Some(last) = self.basic_units().last() {
            if unit.span.start < last.span.end {
                return Err(Error::invalid("units must be appended in chronological order"));
            }
        }
        if self.levels.is_empty() {
            self.levels.push(Vec::new());
        }
        self.levels[0].push(Arc::new(unit));

        let g = self.group_size;
        let mut stats = WorkStats::default();
        let mut dirty = vec![self.levels[0].len() - 1];
        let mut k = 0;
        while self.levels[k].len() > g {
            let len = self.levels[k].len();
            let parents = len.div_ceil(g);
            if self.levels.len() == k + 1 {
                self.levels.push(Vec::new());
            }
            let mut next_dirty = Vec::new();
            for p in 0..parents {
                let range = p * g..((p + 1) * g).min(len);
                let stale = match self.levels[k + 1].get(p) {
                    None => true,
                    Some(node) => node.children.as_ref() != Some(&range) || dirty.iter().any(|d| range.contains(d)),
                };
                if !stale {
                    continue;
                }
                let (node, work) = self.make_parent(k, p, range, cfg, captioner, encoder)?;
                stats += work;
                let node = Arc::new(node);
                if p < self.levels[k + 1].len() {
                    self.levels[k + 1][p] = node;
                } else {
                    self.levels[k + 1].push(node);
                }
                next_dirty.push(p);
            }
            dirty = next_dirty;
            k += 1;
        }
        Ok(stats)
    }

    fn make_parent(
        &self,
        child_level: usize,
        index: usize,
        range: Range<usize>,
        cfg: &MemoryConfig,
        captioner: &dyn Captioner,
        encoder: &dyn TextEncoder,
    ) -> Result<(LongMemoryUnit, WorkStats)> {
        let children = &self.levels[child_level][range.clone()];
        let rows = Matrix::vstack(children.iter().map(|c| &c.centroids))?;
        let seed = derive_seed(
            cfg.seed,
            &[SEED_PARENT, child_level as u64, index as u64, range.len() as u64],
        );
        let km = kmeans_restarts(&rows, cfg.cluster_goal, seed, cfg.kmeans_max_iter, cfg.kmeans_restarts)?;
        let span = children
            .iter()
            .map(|c| c.span)
            .reduce(Span::union)
            .expect("parent has children");
        let captions: Vec<String> = children.iter().map(|c| c.caption.clone()).collect();
        let ctx = format!(
            "level {} node {index} span [{}, {}]",
            child_level + 1,
            span.start,
            span.end
        );
        let caption = captioner.summarize(&captions).map_err(|e| e.with_context(&ctx))?;
        let caption_vec = encoder.encode(&caption).map_err(|e| e.with_context(&ctx))?;
        Ok((
            LongMemoryUnit {
                centroids: km.centroids,
                caption,
                caption_vec,
                span,
                level: child_level + 1,
                children: Some(range),
            },
            WorkStats {
                kmeans_work: km.work,
                captions: 1,
                caption_inputs: captions.len() as u64,
                text_encodes: 1,
            },
        ))
    }

    /// Validate the structural invariants. Returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.levels.is_empty() {
            return Ok(());
        }
        let g = self.group_size;
        let sizes = self.level_sizes();
        let expected = expected_level_sizes(sizes[0], g);
        if sizes != expected {
            return Err(format!("level sizes {sizes:?}, expected {expected:?}"));
        }
        let dim = self.levels[0][0].centroids.cols();
        let key_dim = self.levels[0][0].caption_vec.len();
        for (k, level) in self.levels.iter().enumerate() {
            for (i, node) in level.iter().enumerate() {
                if node.level != k {
                    return Err(format!("node {k}/{i} claims level {}", node.level));
                }
                if node.caption.is_empty() {
                    return Err(format!("node {k}/{i} has an empty caption"));
                }
                if node.centroids.rows() == 0 || node.centroids.cols() != dim || !node.centroids.is_finite() {
                    return Err(format!("node {k}/{i} has malformed centroids"));
                }
                if node.caption_vec.len() != key_dim {
                    return Err(format!("node {k}/{i} caption vector has wrong dimension"));
                }
                if !(node.span.start <= node.span.end) {
                    return Err(format!("node {k}/{i} has an inverted span"));
                }
                if k == 0 {
                    if node.children.is_some() {
                        return Err(format!("basic unit {i} has children"));
                    }
                    if i > 0 && level[i - 1].span.end > node.span.start {
                        return Err(format!("basic units {} and {i} out of order", i - 1));
                    }
                    continue;
                }
                let below = &self.levels[k - 1];
                let want = i * g..((i + 1) * g).min(below.len());
                if node.children.as_ref() != Some(&want) {
                    return Err(format!("node {k}/{i} children {:?}, expected {want:?}", node.children));
                }
                let union = below[want]
                    .iter()
                    .map(|c| c.span)
                    .reduce(Span::union)
                    .expect("nonempty range");
                if union != node.span {
                    return Err(format!("node {k}/{i} span is not the union of its children"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(TreeDocument {
            format: TREE_FORMAT.into(),
            version: TREE_FORMAT_VERSION,
            group_size: self.group_size,
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|n| (**n).clone()).collect())
                .collect(),
        })
        .expect("tree serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let doc: TreeDocument = serde_json::from_value(value)?;
        if doc.format != TREE_FORMAT {
            return Err(Error::invalid(format!("unknown tree format `{}`", doc.format)));
        }
        if doc.version != TREE_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported tree format version {}",
                doc.version
            )));
        }
        Self::from_levels(doc.group_size, doc.levels)
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    format: String,
    version: u32,
    group_size: usize,
    levels: Vec<Vec<LongMemoryUnit>>,
}
