//! The three concurrent stages: selective frame stacking, memory formation and
//! contextual summarization.
//!
//! Two clocks drive them. [`ClockMode::Sim`] is a discrete-event simulation
//! with a [`CostModel`] pricing each piece of work, so reports are a pure
//! function of the inputs. [`ClockMode::Wall`] runs the stages on real threads
//! connected by bounded channels ([`LiveEngine`]).

mod live;
mod sim;
mod stages;

pub use live::LiveEngine;
pub use stages::{answer_query, IngestStage, QueryOutcome};

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::frame_gate::Frame;
use crate::harness::{MetricsReport, TaskType};
use crate::memory::{MemoryUpdate, WorkStats};
use crate::ports::{Judgement, PortSet};
use crate::retrieval::PathStep;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    Sim,
    Wall,
}

/// Stream-time clock. The simulated clock only moves through [`Clock::advance_to`];
/// the wall clock maps elapsed real time onto stream seconds at `speed`.
#[derive(Clone, Debug)]
pub enum Clock {
    Sim { now: f64 },
    Wall { origin: Instant, speed: f64 },
}

impl Clock {
    pub fn simulated() -> Self {
        Clock::Sim { now: 0.0 }
    }

    pub fn wall(speed: f64) -> Self {
        Clock::Wall {
            origin: Instant::now(),
            speed,
        }
    }

    pub fn mode(&self) -> ClockMode {
        match self {
            Clock::Sim { .. } => ClockMode::Sim,
            Clock::Wall { .. } => ClockMode::Wall,
        }
    }

    pub fn now(&self) -> f64 {
        match self {
            Clock::Sim { now } => *now,
            Clock::Wall { origin, speed } => origin.elapsed().as_secs_f64() * speed,
        }
    }

    /// Move a simulated clock forward; never moves backwards. No-op for the wall clock.
    pub fn advance_to(&mut self, t: f64) {
        if let Clock::Sim { now } = self {
            *now = now.max(t);
        }
    }

    /// Block until stream time reaches `t` (wall clock), or jump there (simulated).
    pub fn wait_until(&mut self, t: f64) {
        match self {
            Clock::Sim { now } => *now = now.max(t),
            Clock::Wall { speed, .. } => {
                let speed = *speed;
                let ahead = t - self.now();
                if ahead > 0.0 {
                    std::thread::sleep(std::time::Duration::from_secs_f64(ahead / speed));
                }
            }
        }
    }
}

/// Simulated seconds charged per unit of work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub gate_per_pixel: f64,
    pub encode_per_frame: f64,
    /// Per point-centroid-dimension operation.
    pub kmeans_per_op: f64,
    pub caption_base: f64,
    /// Per captioner input item (token row or child caption).
    pub caption_per_input: f64,
    pub text_encode: f64,
    /// Per dimension of each similarity evaluated during retrieval.
    pub similarity_per_dim: f64,
    pub generate_base: f64,
    /// Per token row in the prompt bundle.
    pub generate_per_token: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            gate_per_pixel: 2e-7,
            encode_per_frame: 0.02,
            kmeans_per_op: 2e-8,
            caption_base: 0.02,
            caption_per_input: 0.002,
            text_encode: 0.005,
            similarity_per_dim: 1e-8,
            generate_base: 0.3,
            generate_per_token: 0.002,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gate_per_pixel,
            self.encode_per_frame,
            self.kmeans_per_op,
            self.caption_base,
            self.caption_per_input,
            self.text_encode,
            self.similarity_per_dim,
            self.generate_base,
            self.generate_per_token,
        ];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("cost model entries must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn ingest(&self, pixels: usize, kept: bool) -> f64 {
        self.gate_per_pixel * pixels as f64 + if kept { self.encode_per_frame } else { 0.0 }
    }

    pub fn formation(&self, w: &WorkStats) -> f64 {
        self.kmeans_per_op * w.kmeans_work as f64
            + self.caption_base * w.captions as f64
            + self.caption_per_input * w.caption_inputs as f64
            + self.text_encode * w.text_encodes as f64
    }

    pub fn retrieval(&self, similarities: usize, dim: usize) -> f64 {
        self.text_encode + self.similarity_per_dim * (similarities * dim) as f64
    }

    pub fn generation(&self, token_rows: usize) -> f64 {
        self.generate_base + self.generate_per_token * token_rows as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Flushed chunks waiting for formation; the ingest stage blocks when full.
    pub chunk_queue: usize,
    /// Frames waiting for the ingest stage (wall clock only).
    pub frame_queue: usize,
    /// Queries waiting for the summarization stage (wall clock only).
    pub query_queue: usize,
    /// Dialogue turns waiting for formation (wall clock only).
    pub dialogue_queue: usize,
    pub cost: CostModel,
    /// Check tree invariants on every published and every read snapshot.
    pub verify_snapshots: bool,
    /// Append one JSON line per answer to this file.
    pub transcript_path: Option<PathBuf>,
    /// Stream seconds per wall second (wall clock only).
    pub speed: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chunk_queue: 4,
            frame_queue: 64,
            query_queue: 64,
            dialogue_queue: 64,
            cost: CostModel::default(),
            verify_snapshots: false,
            transcript_path: None,
            speed: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_queue == 0 || self.frame_queue == 0 || self.query_queue == 0 || self.dialogue_queue == 0 {
            return Err(Error::invalid("queue bounds must be >= 1"));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::invalid("speed must be finite and > 0"));
        }
        self.cost.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub question: String,
    pub t_input: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_type: Option<TaskType>,
}

impl QueryRequest {
    pub fn new(question: impl Into<String>, t_input: f64) -> Self {
        Self {
            question: question.into(),
            t_input,
            task_type: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    /// Position in submission order.
    pub id: usize,
    pub question: String,
    pub answer: String,
    pub t_input: f64,
    /// Context assembled, generation begins.
    pub t_start: f64,
    pub t_done: f64,
    pub rpd: f64,
    pub snapshot_version: u64,
    /// SHA-256 of the verbose prompt bundle JSON; absent when assembly failed.
    pub bundle_digest: Option<String>,
    pub best_caption: String,
    pub path: Vec<PathStep>,
    /// Dialogue turn attached as context, if any.
    pub dialogue_turn: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_type: Option<TaskType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgement: Option<Judgement>,
    pub error: Option<String>,
}

/// One committed memory update, in commit order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitEvent {
    /// Snapshot version produced by this update.
    pub version: u64,
    /// Clock time handed to the store when the update began.
    pub start: f64,
    /// Publication time of the new snapshot.
    pub time: f64,
    pub update: MemoryUpdate,
    /// Answer whose turn was appended, for dialogue updates.
    pub answer_id: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueHighWater {
    pub frames: usize,
    pub chunks: usize,
    pub dialogue: usize,
    pub queries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub clock: ClockMode,
    pub frames_in: u64,
    pub frames_kept: u64,
    pub chunks: u64,
    /// Stream time spent by the ingest stage (simulated or measured).
    pub ingest_seconds: f64,
    /// Input frames per ingest second, dropped frames included.
    pub effective_fps: f64,
    /// Kept frames per ingest second.
    pub kept_fps: f64,
    pub answers: Vec<AnswerRecord>,
    pub metrics: Option<MetricsReport>,
    pub final_version: u64,
    pub tree_levels: Vec<usize>,
    pub dialogue_turns: usize,
    pub queue_high_water: QueueHighWater,
    pub snapshot_checks: u64,
    pub snapshot_violations: u64,
    pub ingest_errors: u64,
    pub formation_errors: u64,
    pub config: EngineConfig,
    #[serde(skip)]
    pub commits: Vec<CommitEvent>,
}

impl RunReport {
    pub fn kept_ratio(&self) -> f64 {
        if self.frames_in == 0 {
            0.0
        } else {
            self.frames_kept as f64 / self.frames_in as f64
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub type FrameSource<'a> = Box<dyn Iterator<Item = Result<Frame>> + Send + 'a>;

/// Run a whole stream and its query trace to completion.
///
/// `queries` must be sorted by `t_input`.
pub fn run(
    source: FrameSource<'_>,
    queries: Vec<QueryRequest>,
    cfg: &EngineConfig,
    ports: &PortSet,
    clock: ClockMode,
) -> Result<RunReport> {
    cfg.validate()?;
    if queries.windows(2).any(|w| w[1].t_input < w[0].t_input) {
        return Err(Error::invalid("queries must be sorted by t_input"));
    }
    if let Some(q) = queries.iter().find(|q| !(q.t_input.is_finite() && q.t_input >= 0.0)) {
        return Err(Error::invalid(format!(
            "query t_input {} must be finite and >= 0",
            q.t_input
        )));
    }
    match clock {
        ClockMode::Sim => sim::run(source, queries, cfg, ports),
        ClockMode::Wall => live::run(source, queries, cfg, ports),
    }
}

pub(crate) struct Transcript(Option<BufWriter<File>>);

impl Transcript {
    pub(crate) fn open(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self(None));
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self(Some(BufWriter::new(file))))
    }

    pub(crate) fn append(&mut self, answer: &AnswerRecord) -> Result<()> {
        if let Some(w) = &mut self.0 {
            serde_json::to_writer(&mut *w, answer)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

pub(crate) fn fps(frames: u64, seconds: f64) -> f64 {
    if seconds > 0.0 {
        frames as f64 / seconds
    } else {
        0.0
    }
}
