use std::sync::Arc;

use crate::config::EngineConfig;
use crate::error::Result;
use crate::frame_gate::{Frame, FrameGate, VisionBuffer};
use crate::memory::{Chunk, MemorySnapshot};
use crate::pipeline::{AnswerRecord, QueryRequest};
use crate::ports::{FrameEncoder, PortSet};
use crate::retrieval::{assemble_context, PromptBundle, QueryVec};

/// Stage 1: gate, encode and buffer frames into chunks.
pub struct IngestStage {
    gate: FrameGate,
    buffer: VisionBuffer,
    encoder: Arc<dyn FrameEncoder>,
    pub frames_in: u64,
    pub frames_kept: u64,
    pub errors: u64,
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub kept: bool,
    pub pixels: usize,
    pub chunk: Option<Chunk>,
}

impl IngestStage {
    pub fn new(cfg: &EngineConfig, ports: &PortSet) -> Result<Self> {
        Ok(Self {
            gate: FrameGate::new(cfg.gate_config())?,
            buffer: VisionBuffer::new(cfg.memory.chunk_len)?,
            encoder: Arc::clone(&ports.frame_encoder),
            frames_in: 0,
            frames_kept: 0,
            errors: 0,
        })
    }

    /// Gate one frame. Input errors (bad size, non-increasing timestamp) are
    /// returned; encoder failures drop the frame and are counted.
    pub fn push(&mut self, frame: &Frame) -> Result<IngestOutcome> {
        let decision = self.gate.gate(frame)?;
        self.frames_in += 1;
        let pixels = frame.width() * frame.height();
        if !decision.is_keep() {
            return Ok(IngestOutcome {
                kept: false,
                pixels,
                chunk: None,
            });
        }
        let embedding = match self.encoder.encode(frame) {
            Ok(e) => e,
            Err(_) => {
                self.errors += 1;
                return Ok(IngestOutcome {
                    kept: false,
                    pixels,
                    chunk: None,
                });
            }
        };
        let chunk = self.buffer.push(embedding)?;
        self.frames_kept += 1;
        Ok(IngestOutcome {
            kept: true,
            pixels,
            chunk,
        })
    }

    /// Flush the partial chunk left at end of stream.
    pub fn finish(&mut self) -> Option<Chunk> {
        self.buffer.flush()
    }
}

/// Result of stage-3 handling of one query, before timing is attached.
pub struct QueryOutcome {
    pub bundle: Result<PromptBundle>,
    /// Caption similarities evaluated during assembly.
    pub similarities: usize,
}

/// Encode the question and assemble its prompt bundle against `snapshot`.
pub fn answer_query(snapshot: &MemorySnapshot, question: &str, cfg: &EngineConfig, ports: &PortSet) -> QueryOutcome {
    let bundle = QueryVec::encode(question, ports.text_encoder.as_ref())
        .and_then(|q| assemble_context(snapshot, &q, &cfg.retrieval));
    let similarities = match &bundle {
        Ok(b) => b.path.nodes_scanned + snapshot.dialogue.len(),
        Err(_) => 0,
    };
    QueryOutcome { bundle, similarities }
}

/// Generator output; `None` when assembly already failed.
pub(crate) fn generate(outcome: &QueryOutcome, ports: &PortSet) -> Option<Result<String>> {
    outcome.bundle.as_ref().ok().map(|b| ports.generator.generate(b))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn record(
    id: usize,
    req: &QueryRequest,
    outcome: &QueryOutcome,
    answer: Option<&Result<String>>,
    snapshot_version: u64,
    t_start: f64,
    t_done: f64,
) -> AnswerRecord {
    let bundle = outcome.bundle.as_ref().ok();
    let error = match (&outcome.bundle, answer) {
        (Err(e), _) | (_, Some(Err(e))) => Some(e.to_string()),
        _ => None,
    };
    AnswerRecord {
        id,
        question: req.question.clone(),
        answer: answer.and_then(|a| a.as_ref().ok()).cloned().unwrap_or_default(),
        t_input: req.t_input,
        t_start,
        t_done,
        rpd: t_start - req.t_input,
        snapshot_version,
        bundle_digest: bundle.map(PromptBundle::digest),
        best_caption: bundle.map(|b| b.path.best_caption.clone()).unwrap_or_default(),
        path: bundle.map(|b| b.path.steps.clone()).unwrap_or_default(),
        dialogue_turn: bundle.and_then(|b| b.dialogue_context.as_ref().map(|d| d.turn_index)),
        task_type: req.task_type,
        judgement: None,
        error,
    }
}
