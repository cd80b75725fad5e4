//! Wall-clock engine: one thread per stage, bounded channels between them,
//! snapshots published through a lock-protected `Arc`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use crossbeam_channel::{bounded, never, select, Receiver, Sender};
use parking_lot::{Mutex, RwLock};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::frame_gate::Frame;
use crate::memory::{Chunk, MemorySnapshot, MemoryStore, MemoryUpdate};
use crate::pipeline::stages::{answer_query, generate, record, IngestStage};
use crate::pipeline::{
    fps, AnswerRecord, Clock, ClockMode, CommitEvent, FrameSource, QueryRequest, QueueHighWater, RunReport, Transcript,
};
use crate::ports::PortSet;

struct QueryMsg {
    id: usize,
    req: QueryRequest,
    reply: Sender<AnswerRecord>,
}

struct Turn {
    question: String,
    answer: String,
    answer_id: usize,
}

#[derive(Default)]
struct Counters {
    high_water: QueueHighWater,
    snapshot_checks: u64,
    snapshot_violations: u64,
}

struct Shared {
    snapshot: RwLock<Arc<MemorySnapshot>>,
    counters: Mutex<Counters>,
}

impl Shared {
    fn check(&self, snap: &MemorySnapshot) {
        let bad = snap.tree.check_invariants().is_err();
        let mut c = self.counters.lock();
        c.snapshot_checks += 1;
        if bad {
            c.snapshot_violations += 1;
        }
    }
}

struct IngestSummary {
    frames_in: u64,
    frames_kept: u64,
    errors: u64,
    busy: f64,
}

struct FormationSummary {
    commits: Vec<CommitEvent>,
    chunks: u64,
    errors: u64,
    final_version: u64,
    tree_levels: Vec<usize>,
    dialogue_turns: usize,
}

/// A running engine. Frames and queries are accepted until [`LiveEngine::finish`].
pub struct LiveEngine {
    cfg: EngineConfig,
    clock: Clock,
    shared: Arc<Shared>,
    frame_tx: Option<Sender<Frame>>,
    query_tx: Option<Sender<QueryMsg>>,
    next_id: AtomicUsize,
    ingest: Option<JoinHandle<Result<IngestSummary>>>,
    formation: Option<JoinHandle<FormationSummary>>,
    summarize: Option<JoinHandle<Result<Vec<AnswerRecord>>>>,
}

impl LiveEngine {
    pub fn start(cfg: &EngineConfig, ports: PortSet) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.pipeline;
        let (frame_tx, frame_rx) = bounded::<Frame>(p.frame_queue);
        let (chunk_tx, chunk_rx) = bounded::<Chunk>(p.chunk_queue);
        let (turn_tx, turn_rx) = bounded::<Turn>(p.dialogue_queue);
        let (query_tx, query_rx) = bounded::<QueryMsg>(p.query_queue);

        let store = MemoryStore::new(cfg.memory.clone())?;
        let shared = Arc::new(Shared {
            snapshot: RwLock::new(Arc::new(store.snapshot())),
            counters: Mutex::default(),
        });
        let clock = Clock::wall(p.speed);
        let ingest = IngestStage::new(cfg, &ports)?;
        let transcript = Transcript::open(p.transcript_path.as_deref())?;

        let ingest = {
            let shared = Arc::clone(&shared);
            std::thread::spawn(move || ingest_loop(ingest, frame_rx, chunk_tx, &shared))
        };
        let formation = {
            let (shared, ports, clock) = (Arc::clone(&shared), ports.clone(), clock.clone());
            let verify = p.verify_snapshots;
            std::thread::spawn(move || formation_loop(store, chunk_rx, turn_rx, &ports, &clock, &shared, verify))
        };
        let summarize = {
            let (shared, clock, cfg) = (Arc::clone(&shared), clock.clone(), cfg.clone());
            std::thread::spawn(move || summarize_loop(query_rx, turn_tx, transcript, &cfg, &ports, &clock, &shared))
        };
        Ok(Self {
            cfg: cfg.clone(),
            clock,
            shared,
            frame_tx: Some(frame_tx),
            query_tx: Some(query_tx),
            next_id: AtomicUsize::new(0),
            ingest: Some(ingest),
            formation: Some(formation),
            summarize: Some(summarize),
        })
    }

    /// Current stream time.
    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    /// Stream seconds per wall second.
    pub fn speed(&self) -> f64 {
        self.cfg.pipeline.speed
    }

    /// Sleep until stream time reaches `t`.
    pub fn wait_until(&self, t: f64) {
        self.clock.clone().wait_until(t);
    }

    /// Latest published snapshot.
    pub fn snapshot(&self) -> Arc<MemorySnapshot> {
        Arc::clone(&self.shared.snapshot.read())
    }

    /// Hand a frame to the ingest stage; blocks while its queue is full.
    pub fn push_frame(&self, frame: Frame) -> Result<()> {
        let tx = self.frame_tx.as_ref().ok_or(Error::EngineStopped)?;
        tx.send(frame).map_err(|_| Error::EngineStopped)?;
        let mut c = self.shared.counters.lock();
        c.high_water.frames = c.high_water.frames.max(tx.len());
        Ok(())
    }

    /// Queue a query once stream time reaches its `t_input`; the answer arrives on the returned channel.
    pub fn submit(&self, req: QueryRequest) -> Result<Receiver<AnswerRecord>> {
        let tx = self.query_tx.as_ref().ok_or(Error::EngineStopped)?;
        self.wait_until(req.t_input);
        let (reply, answer) = bounded(1);
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        tx.send(QueryMsg { id, req, reply }).map_err(|_| Error::EngineStopped)?;
        let mut c = self.shared.counters.lock();
        c.high_water.queries = c.high_water.queries.max(tx.len());
        Ok(answer)
    }

    /// Ask a question now and wait for its answer.
    pub fn submit_query(&self, question: &str) -> Result<AnswerRecord> {
        let rx = self.submit(QueryRequest::new(question, self.now()))?;
        rx.recv().map_err(|_| Error::EngineStopped)
    }

    /// Close the inputs, drain every stage and collect the report. Later calls
    /// to the engine are rejected with [`Error::EngineStopped`].
    pub fn finish(&mut self) -> Result<RunReport> {
        let (Some(ingest), Some(formation), Some(summarize)) =
            (self.ingest.take(), self.formation.take(), self.summarize.take())
        else {
            return Err(Error::EngineStopped);
        };
        self.frame_tx = None;
        self.query_tx = None;
        let ingest = ingest.join().expect("ingest stage panicked");
        let answers = summarize.join().expect("summarization stage panicked");
        let formation = formation.join().expect("formation stage panicked");
        let ingest = ingest?;
        let answers = answers?;
        let c = self.shared.counters.lock();
        Ok(RunReport {
            clock: ClockMode::Wall,
            frames_in: ingest.frames_in,
            frames_kept: ingest.frames_kept,
            chunks: formation.chunks,
            ingest_seconds: ingest.busy,
            effective_fps: fps(ingest.frames_in, ingest.busy),
            kept_fps: fps(ingest.frames_kept, ingest.busy),
            answers,
            metrics: None,
            final_version: formation.final_version,
            tree_levels: formation.tree_levels,
            dialogue_turns: formation.dialogue_turns,
            queue_high_water: c.high_water,
            snapshot_checks: c.snapshot_checks,
            snapshot_violations: c.snapshot_violations,
            ingest_errors: ingest.errors,
            formation_errors: formation.errors,
            config: self.cfg.clone(),
            commits: formation.commits,
        })
    }
}

impl Drop for LiveEngine {
    fn drop(&mut self) {
        if self.ingest.is_some() {
            let _ = self.finish();
        }
    }
}

fn ingest_loop(
    mut stage: IngestStage,
    frames: Receiver<Frame>,
    chunks: Sender<Chunk>,
    shared: &Shared,
) -> Result<IngestSummary> {
    let mut busy = 0.0;
    let send = |chunk: Chunk| {
        // the formation stage only stops after this sender is dropped
        chunks.send(chunk).expect("formation stage alive");
        let mut c = shared.counters.lock();
        c.high_water.chunks = c.high_water.chunks.max(chunks.len());
    };
    for frame in frames {
        let started = Instant::now();
        let out = stage.push(&frame)?;
        busy += started.elapsed().as_secs_f64();
        if let Some(chunk) = out.chunk {
            send(chunk);
        }
    }
    if let Some(chunk) = stage.finish() {
        send(chunk);
    }
    Ok(IngestSummary {
        frames_in: stage.frames_in,
        frames_kept: stage.frames_kept,
        errors: stage.errors,
        busy,
    })
}

fn formation_loop(
    mut store: MemoryStore,
    chunks: Receiver<Chunk>,
    turns: Receiver<Turn>,
    ports: &PortSet,
    clock: &Clock,
    shared: &Shared,
    verify: bool,
) -> FormationSummary {
    let mut summary = FormationSummary {
        commits: Vec::new(),
        chunks: 0,
        errors: 0,
        final_version: 0,
        tree_levels: Vec::new(),
        dialogue_turns: 0,
    };
    let (mut chunk_rx, mut turn_rx) = (chunks, turns);
    let mut open = 2;
    while open > 0 {
        let start: f64;
        let applied = select! {
            recv(chunk_rx) -> msg => match msg {
                Ok(chunk) => {
                    start = clock.now();
                    let r = store.apply_chunk(&chunk, ports, start);
                    if r.is_ok() {
                        summary.chunks += 1;
                    }
                    r.map(|_| (MemoryUpdate::Chunk { index: chunk.index }, None))
                }
                Err(_) => {
                    chunk_rx = never();
                    open -= 1;
                    continue;
                }
            },
            recv(turn_rx) -> msg => match msg {
                Ok(turn) => {
                    start = clock.now();
                    store
                        .apply_dialogue(&turn.question, &turn.answer, ports, start)
                        .map(|index| (MemoryUpdate::Dialogue { turn: index }, Some(turn.answer_id)))
                }
                Err(_) => {
                    turn_rx = never();
                    open -= 1;
                    continue;
                }
            },
        };
        match applied {
            Ok((update, answer_id)) => {
                let snap = Arc::new(store.snapshot());
                if verify {
                    shared.check(&snap);
                }
                *shared.snapshot.write() = snap;
                summary.commits.push(CommitEvent {
                    version: store.version(),
                    start,
                    time: clock.now(),
                    update,
                    answer_id,
                });
            }
            Err(_) => summary.errors += 1,
        }
    }
    summary.final_version = store.version();
    summary.tree_levels = store.tree().level_sizes();
    summary.dialogue_turns = store.snapshot().dialogue.len();
    summary
}

fn summarize_loop(
    queries: Receiver<QueryMsg>,
    turns: Sender<Turn>,
    mut transcript: Transcript,
    cfg: &EngineConfig,
    ports: &PortSet,
    clock: &Clock,
    shared: &Shared,
) -> Result<Vec<AnswerRecord>> {
    let mut answers = Vec::new();
    let mut last_version = 0;
    for QueryMsg { id, req, reply } in queries {
        let snapshot = Arc::clone(&shared.snapshot.read());
        if cfg.pipeline.verify_snapshots {
            shared.check(&snapshot);
            if snapshot.version < last_version {
                shared.counters.lock().snapshot_violations += 1;
            }
        }
        last_version = snapshot.version;
        let outcome = answer_query(&snapshot, &req.question, cfg, ports);
        let t_start = clock.now().max(req.t_input);
        let answer = generate(&outcome, ports);
        let t_done = clock.now().max(t_start);
        let rec = record(id, &req, &outcome, answer.as_ref(), snapshot.version, t_start, t_done);
        if let Some(Ok(text)) = answer {
            turns
                .send(Turn {
                    question: req.question.clone(),
                    answer: text,
                    answer_id: id,
                })
                .expect("formation stage alive");
            let mut c = shared.counters.lock();
            c.high_water.dialogue = c.high_water.dialogue.max(turns.len());
        }
        transcript.append(&rec)?;
        // the submitter may have stopped waiting
        let _ = reply.send(rec.clone());
        answers.push(rec);
    }
    Ok(answers)
}

pub(crate) fn run(
    source: FrameSource<'_>,
    queries: Vec<QueryRequest>,
    cfg: &EngineConfig,
    ports: &PortSet,
) -> Result<RunReport> {
    let mut engine = LiveEngine::start(cfg, ports.clone())?;
    let mut queries = queries.into_iter().peekable();
    let fed = || -> Result<()> {
        for frame in source {
            let frame = frame?;
            while let Some(q) = queries.next_if(|q| q.t_input <= frame.timestamp) {
                engine.submit(q)?;
            }
            engine.wait_until(frame.timestamp);
            engine.push_frame(frame)?;
        }
        for q in queries.by_ref() {
            engine.submit(q)?;
        }
        Ok(())
    };
    let fed = fed();
    let report = engine.finish();
    match (fed, report) {
        // a stopped engine reports its own cause
        (Err(Error::EngineStopped), r) | (Ok(()), r) => r,
        (Err(e), _) => Err(e),
    }
}
