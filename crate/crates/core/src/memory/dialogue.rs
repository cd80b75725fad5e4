use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ports::TextEncoder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueEntry {
    pub question: String,
    pub answer: String,
    pub vec: Vec<f64>,
    pub turn_index: usize,
    pub timestamp: f64,
}

/// Text the encoder sees for one turn.
pub fn turn_text(question: &str, answer: &str) -> String {
    format!("Q: {question} A: {answer}")
}

/// Append-only, pre-encoded question/answer history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DialogueMemory {
    entries: Vec<Arc<DialogueEntry>>,
}

impl DialogueMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Arc<DialogueEntry>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn append(
        &mut self,
        question: &str,
        answer: &str,
        encoder: &dyn TextEncoder,
        timestamp: f64,
    ) -> Result<&DialogueEntry> {
        if question.trim().is_empty() {
            return Err(Error::invalid("dialogue question must be nonempty"));
        }
        let vec = encoder.encode(&turn_text(question, answer))?;
        if let Some(first) = self.entries.first() {
            if first.vec.len() != vec.len() {
                return Err(Error::dims(first.vec.len(), vec.len()));
            }
        }
        let turn_index = self.entries.last().map_or(0, |e| e.turn_index + 1);
        self.entries.push(Arc::new(DialogueEntry {
            question: question.to_string(),
            answer: answer.to_string(),
            vec,
            turn_index,
            timestamp,
        }));
        Ok(self.entries.last().expect("just pushed"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ports::stubs::HashTextEncoder;

    #[test]
    fn first_turn_has_index_zero() {
        let mut mem = DialogueMemory::new();
        let e = mem.append("what?", "that", &HashTextEncoder::new(32), 1.0).unwrap();
        assert_eq!(e.turn_index, 0);
        assert_eq!(mem.len(), 1);
    }

    #[test]
    fn appends_preserve_history() {
        let enc = HashTextEncoder::new(32);
        let mut mem = DialogueMemory::new();
        let mut seen = Vec::new();
        for i in 0..6 {
            mem.append(&format!("q{i}"), &format!("a{i}"), &enc, i as f64).unwrap();
            assert_eq!(&mem.entries()[..seen.len()], &seen[..]);
            seen = mem.entries().to_vec();
        }
        let idx: Vec<usize> = mem.entries().iter().map(|e| e.turn_index).collect();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn same_turn_encodes_identically() {
        let enc = HashTextEncoder::new(32);
        let mut mem = DialogueMemory::new();
        mem.append("red cup?", "on the table", &enc, 0.0).unwrap();
        mem.append("red cup?", "on the table", &enc, 1.0).unwrap();
        assert_eq!(mem.entries()[0].vec, mem.entries()[1].vec);
    }

    #[test]
    fn empty_question_rejected() {
        let mut mem = DialogueMemory::new();
        assert!(mem.append("  ", "a", &HashTextEncoder::new(32), 0.0).is_err());
    }
}
