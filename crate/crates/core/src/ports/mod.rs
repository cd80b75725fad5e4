//! Model ports. The engine only talks to these traits; deterministic stubs
//! and an HTTP client for real backends both implement them.

pub mod judge;
pub mod remote;
pub mod stubs;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_gate::{Frame, VisionEmbedding};
use crate::memory::Chunk;
use crate::retrieval::PromptBundle;

pub use judge::{exact_match_judge, ExactMatchJudge, Judgement};
pub use remote::{remote_call, Endpoint, RemoteBackendConfig, RemoteClient};
pub use stubs::{hash_text_encode, EchoGenerator, HashTextEncoder, StubFrameEncoder, TagCaptioner};

pub trait FrameEncoder: Send + Sync {
    fn encode(&self, frame: &Frame) -> Result<VisionEmbedding>;

    fn deterministic(&self) -> bool {
        true
    }
}

pub trait TextEncoder: Send + Sync {
    fn encode(&self, text: &str) -> Result<Vec<f64>>;

    fn deterministic(&self) -> bool {
        true
    }
}

pub trait Captioner: Send + Sync {
    fn caption_chunk(&self, chunk: &Chunk) -> Result<String>;

    /// Summarize child captions into a parent caption.
    fn summarize(&self, captions: &[String]) -> Result<String>;

    fn deterministic(&self) -> bool {
        true
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, bundle: &PromptBundle) -> Result<String>;

    fn deterministic(&self) -> bool {
        true
    }
}

pub trait Judge: Send + Sync {
    fn judge(&self, question: &str, reference: &str, prediction: &str) -> Result<Judgement>;

    fn deterministic(&self) -> bool {
        true
    }
}

/// Shape parameters for the stub ports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    /// Tokens per frame embedding (`n`).
    pub tokens_per_frame: usize,
    /// Token dimension (`d`).
    pub token_dim: usize,
    /// Text encoder output dimension.
    pub text_dim: usize,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            tokens_per_frame: 4,
            token_dim: 64,
            text_dim: 512,
        }
    }
}

impl StubConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tokens_per_frame == 0 || self.token_dim == 0 {
            return Err(Error::invalid("stub embeddings need n >= 1 and d >= 1"));
        }
        if self.text_dim < 8 {
            return Err(Error::invalid("text_dim must be >= 8"));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct PortSet {
    pub frame_encoder: Arc<dyn FrameEncoder>,
    pub text_encoder: Arc<dyn TextEncoder>,
    pub captioner: Arc<dyn Captioner>,
    pub generator: Arc<dyn Generator>,
    pub judge: Arc<dyn Judge>,
}

impl std::fmt::Debug for PortSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PortSet")
            .field("deterministic", &self.deterministic())
            .finish_non_exhaustive()
    }
}

impl PortSet {
    pub fn stub(cfg: &StubConfig) -> Self {
        Self {
            frame_encoder: Arc::new(StubFrameEncoder::new(cfg.tokens_per_frame, cfg.token_dim)),
            text_encoder: Arc::new(HashTextEncoder::new(cfg.text_dim)),
            captioner: Arc::new(TagCaptioner),
            generator: Arc::new(EchoGenerator),
            judge: Arc::new(ExactMatchJudge),
        }
    }

    /// Remote text encoder, captioner, generator and judge. The protocol has no
    /// frame endpoint, so frames still go through the stub encoder.
    pub fn remote(remote: &RemoteBackendConfig, stub: &StubConfig) -> Result<Self> {
        let client = Arc::new(RemoteClient::new(remote.clone())?);
        Ok(Self {
            frame_encoder: Arc::new(StubFrameEncoder::new(stub.tokens_per_frame, stub.token_dim)),
            text_encoder: Arc::new(remote::RemoteTextEncoder::new(Arc::clone(&client))),
            captioner: Arc::new(remote::RemoteCaptioner::new(Arc::clone(&client))),
            generator: Arc::new(remote::RemoteGenerator::new(Arc::clone(&client))),
            judge: Arc::new(remote::RemoteJudge::new(client)),
        })
    }

    pub fn deterministic(&self) -> bool {
        self.frame_encoder.deterministic()
            && self.text_encoder.deterministic()
            && self.captioner.deterministic()
            && self.generator.deterministic()
            && self.judge.deterministic()
    }
}
