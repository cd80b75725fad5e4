use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame_gate::VisionEmbedding;
use crate::matrix::Matrix;

/// Closed time interval `[start, end]` in stream seconds. Serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn union(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [start, end] = <[f64; 2]>::deserialize(d)?;
        Ok(Span { start, end })
    }
}

/// One flushed vision buffer: up to `L` consecutive kept embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    /// Position of this chunk in the stream, starting at 0.
    pub index: u64,
    embeddings: Vec<VisionEmbedding>,
}

impl Chunk {
    pub fn new(index: u64, embeddings: Vec<VisionEmbedding>) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::invalid("chunk must be nonempty"));
        }
        if embeddings
            .windows(2)
            .any(|w| w[1].source_timestamp < w[0].source_timestamp)
        {
            return Err(Error::invalid("chunk embeddings must be chronological"));
        }
        Ok(Self { index, embeddings })
    }

    pub fn embeddings(&self) -> &[VisionEmbedding] {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn span(&self) -> Span {
        Span::new(
            self.embeddings[0].source_timestamp,
            self.embeddings[self.embeddings.len() - 1].source_timestamp,
        )
    }

    /// Sorted, deduplicated union of member tags.
    pub fn tags(&self) -> Vec<String> {
        self.embeddings
            .iter()
            .flat_map(|e| e.source_tags.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// All token rows of all embeddings, `(len * n) x d`.
    pub fn token_rows(&self) -> Result<Matrix> {
        Matrix::vstack(self.embeddings.iter().map(|e| &e.tokens))
    }
}
