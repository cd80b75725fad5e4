use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::memory::Chunk;

/// `n x d` token matrix produced by the frame encoder for one kept frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisionEmbedding {
    pub tokens: Matrix,
    pub source_timestamp: f64,
    #[serde(default)]
    pub source_tags: Vec<String>,
}

impl VisionEmbedding {
    pub fn new(tokens: Matrix, source_timestamp: f64, source_tags: Vec<String>) -> Result<Self> {
        if tokens.rows() == 0 || tokens.cols() == 0 {
            return Err(Error::invalid("embedding must have n >= 1 and d >= 1"));
        }
        Ok(Self {
            tokens,
            source_timestamp,
            source_tags,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tokens.shape()
    }
}

/// Holds kept embeddings until `capacity` of them form a chunk.
#[derive(Debug)]
pub struct VisionBuffer {
    capacity: usize,
    entries: Vec<VisionEmbedding>,
    shape: Option<(usize, usize)>,
    next_chunk: u64,
}

impl VisionBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("buffer capacity must be >= 1"));
        }
        Ok(Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            shape: None,
            next_chunk: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of chunks emitted so far.
    pub fn chunks_emitted(&self) -> u64 {
        self.next_chunk
    }

    pub fn push(&mut self, e: VisionEmbedding) -> Result<Option<Chunk>> {
        match self.shape {
            Some(shape) if shape != e.shape() => {
                return Err(Error::dims(format!("{shape:?}"), format!("{:?}", e.shape())))
            }
            None => self.shape = Some(e.shape()),
            _ => {}
        }
        if let Some(last) = self.entries.last() {
            if e.source_timestamp < last.source_timestamp {
                return Err(Error::invalid("embeddings must arrive in timestamp order"));
            }
        }
        self.entries.push(e);
        if self.entries.len() >= self.capacity {
            Ok(self.emit())
        } else {
            Ok(None)
        }
    }

    /// Flush whatever is buffered as a short chunk (end of stream).
    pub fn flush(&mut self) -> Option<Chunk> {
        self.emit()
    }

    fn emit(&mut self) -> Option<Chunk> {
        if self.entries.is_empty() {
            return None;
        }
        let embeddings = std::mem::replace(&mut self.entries, Vec::with_capacity(self.capacity));
        let index = self.next_chunk;
        self.next_chunk += 1;
        Some(Chunk::new(index, embeddings).expect("buffer entries are nonempty and ordered"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(ts: f64) -> VisionEmbedding {
        VisionEmbedding::new(Matrix::zeros(2, 3), ts, vec![]).unwrap()
    }

    #[test]
    fn emits_when_full() {
        let mut buf = VisionBuffer::new(3).unwrap();
        assert!(buf.push(emb(0.0)).unwrap().is_none());
        assert!(buf.push(emb(1.0)).unwrap().is_none());
        let chunk = buf.push(emb(2.0)).unwrap().unwrap();
        assert_eq!(chunk.len(), 3);
        assert_eq!(chunk.span().start, 0.0);
        assert_eq!(chunk.span().end, 2.0);
        assert!(buf.is_empty());
    }

    #[test]
    fn base_capacity_emits_every_25() {
        let mut buf = VisionBuffer::new(25).unwrap();
        let emitted: Vec<usize> = (0..100)
            .filter_map(|i| buf.push(emb(i as f64)).unwrap().map(|_| i))
            .collect();
        assert_eq!(emitted, vec![24, 49, 74, 99]);
    }

    #[test]
    fn capacity_one_emits_every_push() {
        let mut buf = VisionBuffer::new(1).unwrap();
        for i in 0..5 {
            let c = buf.push(emb(i as f64)).unwrap().unwrap();
            assert_eq!(c.len(), 1);
            assert_eq!(c.index, i as u64);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut buf = VisionBuffer::new(4).unwrap();
        buf.push(emb(0.0)).unwrap();
        let other = VisionEmbedding::new(Matrix::zeros(3, 3), 1.0, vec![]).unwrap();
        assert!(matches!(buf.push(other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn flush_emits_partial_chunk() {
        let mut buf = VisionBuffer::new(4).unwrap();
        buf.push(emb(0.0)).unwrap();
        buf.push(emb(1.0)).unwrap();
        assert_eq!(buf.flush().unwrap().len(), 2);
        assert!(buf.flush().is_none());
    }
}
