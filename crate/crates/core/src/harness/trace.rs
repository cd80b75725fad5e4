//! JSON-lines query traces.
//!
//! ```text
//! {"type":"header","source":{"kind":"synthetic","spec":{...}}}
//! {"type":"query","t_input":81.0,"question":"...","reference_answer":"...","task_type":"LM"}
//! {"type":"query","t_input":83.0,"question":"...","reference_answer":"...","task_type":"CI","follows":0}
//! ```
//!
//! The header may instead name a directory of PGM frames:
//! `{"kind":"pgm_dir","dir":"frames","fps":10.0}`; relative directories are
//! resolved against the trace file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_gate::pgm::pgm_dir_frames;
use crate::harness::scenes::{synth_scenes, SceneDef, SceneSpec, Timeline};
use crate::pipeline::{FrameSource, QueryRequest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    /// Object search.
    OS,
    /// Long-term memory.
    LM,
    /// Short-term memory.
    SM,
    /// Conversational interaction.
    CI,
    /// Knowledge-based.
    KG,
    /// Simultaneous.
    SF,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameSourceSpec {
    Synthetic { spec: SceneSpec },
    PgmDir { dir: PathBuf, fps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceQuery {
    pub t_input: f64,
    pub question: String,
    pub reference_answer: String,
    pub task_type: TaskType,
    /// Index of the earlier query this one follows up on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follows: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub source: FrameSourceSpec,
    pub queries: Vec<TraceQuery>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header { source: FrameSourceSpec },
    Query(TraceQuery),
}

impl Trace {
    /// Parse trace text; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::TraceLoad {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut source = None;
        let mut queries: Vec<TraceQuery> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(raw).map_err(|e| err(line, e.to_string()))?;
            match parsed {
                Line::Header { source: s } => {
                    if source.is_some() {
                        return Err(err(line, "second header".into()));
                    }
                    if !queries.is_empty() {
                        return Err(err(line, "header must come first".into()));
                    }
                    if let FrameSourceSpec::Synthetic { spec } = &s {
                        spec.validate().map_err(|e| err(line, e.to_string()))?;
                    }
                    if let FrameSourceSpec::PgmDir { fps, .. } = &s {
                        if !(*fps > 0.0 && fps.is_finite()) {
                            return Err(err(line, "fps must be > 0".into()));
                        }
                    }
                    source = Some(s);
                }
                Line::Query(q) => {
                    if source.is_none() {
                        return Err(err(line, "query before header".into()));
                    }
                    if !(q.t_input.is_finite() && q.t_input >= 0.0) {
                        return Err(err(line, format!("t_input {} must be finite and >= 0", q.t_input)));
                    }
                    if let Some(prev) = queries.last() {
                        if q.t_input < prev.t_input {
                            return Err(err(line, "queries must be sorted by t_input".into()));
                        }
                    }
                    if q.follows.is_some_and(|f| f >= queries.len()) {
                        return Err(err(line, "follows must name an earlier query".into()));
                    }
                    queries.push(q);
                }
            }
        }
        let source = source.ok_or_else(|| err(0, "missing header".into()))?;
        Ok(Self { source, queries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::TraceLoad {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Line::Header {
            source: self.source.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes")).unwrap();
        for q in &self.queries {
            let line = serde_json::to_string(&Line::Query(q.clone())).expect("query serializes");
            writeln!(out, "{line}").unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn requests(&self) -> Vec<QueryRequest> {
        self.queries
            .iter()
            .map(|q| QueryRequest {
                question: q.question.clone(),
                t_input: q.t_input,
                task_type: Some(q.task_type),
            })
            .collect()
    }

    /// Open the frame source; relative PGM directories resolve against `base_dir`.
    pub fn frames(&self, base_dir: &Path) -> Result<FrameSource<'static>> {
        match &self.source {
            FrameSourceSpec::Synthetic { spec } => {
                let (stream, _) = synth_scenes(spec)?;
                Ok(Box::new(stream.map(Ok)))
            }
            FrameSourceSpec::PgmDir { dir, fps } => {
                let dir = if dir.is_absolute() {
                    dir.clone()
                } else {
                    base_dir.join(dir)
                };
                Ok(Box::new(pgm_dir_frames(&dir, *fps)?))
            }
        }
    }

    pub fn timeline(&self) -> Option<Timeline> {
        match &self.source {
            FrameSourceSpec::Synthetic { spec } => synth_scenes(spec).ok().map(|(_, t)| t),
            FrameSourceSpec::PgmDir { .. } => None,
        }
    }
}

pub const SCENE_TAGS: &[&str] = &[
    "kitchen",
    "garden",
    "office",
    "street",
    "beach",
    "forest",
    "library",
    "garage",
    "station",
    "market",
    "bakery",
    "harbor",
    "stadium",
    "museum",
    "bridge",
    "desert",
    "bedroom",
    "classroom",
    "hospital",
    "airport",
    "farm",
    "theater",
    "parking",
    "lake",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceGenConfig {
    pub scenes: usize,
    pub scene_duration: f64,
    pub fps: f64,
    pub noise: f64,
    pub min_motion: f64,
    pub max_motion: f64,
    pub seed: u64,
}

impl Default for TraceGenConfig {
    fn default() -> Self {
        Self {
            scenes: 5,
            scene_duration: 20.0,
            fps: 10.0,
            noise: 0.01,
            min_motion: 0.1,
            max_motion: 0.5,
            seed: 0,
        }
    }
}

pub fn lm_question(tag: &str) -> String {
    format!("What did you see in the {tag}?")
}

/// Repeats the long-memory question and the tag so that the earlier turn is
/// recalled from dialogue memory ahead of other turns.
pub fn follow_up_question(tag: &str) -> String {
    format!("{} More on the {tag}, {tag}.", lm_question(tag))
}

/// A synthetic stream of distinct tagged scenes, with one long-memory question
/// about every scene but the last, each followed by a conversational follow-up.
/// All questions are asked during the last scene.
pub fn gen_trace(cfg: &TraceGenConfig) -> Result<Trace> {
    if cfg.scenes < 2 || cfg.scenes > SCENE_TAGS.len() {
        return Err(Error::invalid(format!("scenes must be in 2..={}", SCENE_TAGS.len())));
    }
    if !(cfg.min_motion <= cfg.max_motion) {
        return Err(Error::invalid("min_motion must be <= max_motion"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tags: Vec<&str> = SCENE_TAGS.to_vec();
    tags.shuffle(&mut rng);
    tags.truncate(cfg.scenes);
    let scenes: Vec<SceneDef> = tags
        .iter()
        .map(|t| SceneDef {
            tags: vec![t.to_string()],
            duration: cfg.scene_duration,
            motion: rng.random_range(cfg.min_motion..=cfg.max_motion),
        })
        .collect();
    let spec = SceneSpec {
        scenes,
        fps: cfg.fps,
        noise: cfg.noise,
        seed: rng.random(),
        ..SceneSpec::default()
    };
    spec.validate()?;
    let (_, timeline) = synth_scenes(&spec)?;
    let last = timeline.entries.last().expect("at least two scenes");
    let asked = tags.len() - 1;
    let gap = (last.end - last.start) / (2 * asked + 1) as f64;
    let mut queries = Vec::with_capacity(2 * asked);
    for (i, tag) in tags[..asked].iter().enumerate() {
        let t = last.start + gap * (2 * i + 1) as f64;
        queries.push(TraceQuery {
            t_input: t,
            question: lm_question(tag),
            reference_answer: format!("scene: {tag}"),
            task_type: TaskType::LM,
            follows: None,
        });
        queries.push(TraceQuery {
            t_input: t + gap,
            question: follow_up_question(tag),
            reference_answer: format!("scene: {tag} (following up on: {})", lm_question(tag)),
            task_type: TaskType::CI,
            follows: Some(queries.len() - 1),
        });
    }
    Ok(Trace {
        source: FrameSourceSpec::Synthetic { spec },
        queries,
    })
}
