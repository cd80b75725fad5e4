//! Discrete-event replay of the three stages.
//!
//! Ingest has its own timeline: frame `i` starts at `max(timestamp, ingest free)`.
//! Formation jobs (chunks, dialogue appends) and queries share one model
//! device, served first-come first-served by request time without preemption;
//! equal request times order chunk, dialogue, query. Because the device is
//! serial, a query always reads the snapshot committed by every job that
//! finished before it started.

use std::collections::VecDeque;
use std::iter::Peekable;

use crate::config::EngineConfig;
use crate::error::Result;
use crate::memory::{Chunk, MemoryStore, MemoryUpdate};
use crate::pipeline::stages::{answer_query, generate, record, IngestStage};
use crate::pipeline::{fps, ClockMode, CommitEvent, FrameSource, QueryRequest, QueueHighWater, RunReport, Transcript};
use crate::ports::PortSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum JobKind {
    Chunk,
    Dialogue,
    Query,
}

struct PendingTurn {
    request: f64,
    question: String,
    answer: String,
    answer_id: usize,
}

struct Sim<'a> {
    cfg: &'a EngineConfig,
    ports: &'a PortSet,
    frames: Peekable<FrameSource<'a>>,
    ingest: IngestStage,
    ingest_free: f64,
    ingest_busy: f64,
    flushed: bool,
    blocked: Option<(f64, Chunk)>,
    last_chunk_start: f64,
    chunks: VecDeque<(f64, Chunk)>,
    turns: VecDeque<PendingTurn>,
    queries: VecDeque<(usize, QueryRequest)>,
    device_free: f64,
    store: MemoryStore,
    report: RunReport,
    transcript: Transcript,
}

pub(crate) fn run(
    source: FrameSource<'_>,
    queries: Vec<QueryRequest>,
    cfg: &EngineConfig,
    ports: &PortSet,
) -> Result<RunReport> {
    let mut sim = Sim {
        cfg,
        ports,
        frames: source.peekable(),
        ingest: IngestStage::new(cfg, ports)?,
        ingest_free: 0.0,
        ingest_busy: 0.0,
        flushed: false,
        blocked: None,
        last_chunk_start: 0.0,
        chunks: VecDeque::new(),
        turns: VecDeque::new(),
        queries: queries.into_iter().enumerate().collect(),
        device_free: 0.0,
        store: MemoryStore::new(cfg.memory.clone())?,
        report: empty_report(cfg),
        transcript: Transcript::open(cfg.pipeline.transcript_path.as_deref())?,
    };
    loop {
        sim.advance_ingest()?;
        let Some(kind) = sim.next_job() else { break };
        match kind {
            JobKind::Chunk => sim.run_chunk(),
            JobKind::Dialogue => sim.run_dialogue(),
            JobKind::Query => sim.run_query()?,
        }
    }
    Ok(sim.finish())
}

fn empty_report(cfg: &EngineConfig) -> RunReport {
    RunReport {
        clock: ClockMode::Sim,
        frames_in: 0,
        frames_kept: 0,
        chunks: 0,
        ingest_seconds: 0.0,
        effective_fps: 0.0,
        kept_fps: 0.0,
        answers: Vec::new(),
        metrics: None,
        final_version: 0,
        tree_levels: Vec::new(),
        dialogue_turns: 0,
        queue_high_water: QueueHighWater::default(),
        snapshot_checks: 0,
        snapshot_violations: 0,
        ingest_errors: 0,
        formation_errors: 0,
        config: cfg.clone(),
        commits: Vec::new(),
    }
}

impl Sim<'_> {
    /// Earliest possible start of the next device job; `None` when nothing is pending.
    fn horizon(&self) -> Option<f64> {
        let earliest = [
            self.chunks.front().map(|c| c.0),
            self.turns.front().map(|t| t.request),
            self.queries.front().map(|q| q.1.t_input),
        ]
        .into_iter()
        .flatten()
        .reduce(f64::min)?;
        Some(earliest.max(self.device_free))
    }

    fn next_job(&self) -> Option<JobKind> {
        let candidates = [
            self.chunks.front().map(|c| (c.0, JobKind::Chunk)),
            self.turns.front().map(|t| (t.request, JobKind::Dialogue)),
            self.queries.front().map(|q| (q.1.t_input, JobKind::Query)),
        ];
        let pick = |ready_only: bool| {
            candidates
                .iter()
                .flatten()
                .filter(|(r, _)| !ready_only || *r <= self.device_free)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|c| c.1)
        };
        pick(true).or_else(|| pick(false))
    }

    fn emit(&mut self, ready: f64, chunk: Chunk) {
        if self.chunks.len() < self.cfg.pipeline.chunk_queue {
            self.chunks.push_back((ready, chunk));
            let hw = &mut self.report.queue_high_water.chunks;
            *hw = (*hw).max(self.chunks.len());
        } else {
            self.blocked = Some((ready, chunk));
        }
    }

    /// Run ingest until it is blocked, exhausted, or past the next device start.
    fn advance_ingest(&mut self) -> Result<()> {
        loop {
            if let Some((ready, chunk)) = self.blocked.take() {
                if self.chunks.len() >= self.cfg.pipeline.chunk_queue {
                    self.blocked = Some((ready, chunk));
                    return Ok(());
                }
                // the slot freed when the device took the last chunk
                let pushed = ready.max(self.last_chunk_start);
                self.ingest_free = self.ingest_free.max(pushed);
                self.emit(pushed, chunk);
            }
            let horizon = self.horizon().unwrap_or(f64::INFINITY);
            let next = match self.frames.peek() {
                None => {
                    if !self.flushed {
                        self.flushed = true;
                        if let Some(chunk) = self.ingest.finish() {
                            self.emit(self.ingest_free, chunk);
                            continue;
                        }
                    }
                    return Ok(());
                }
                Some(Err(_)) => {
                    return Err(self.frames.next().expect("peeked").expect_err("peeked an error"));
                }
                Some(Ok(frame)) => frame.timestamp.max(self.ingest_free),
            };
            if next > horizon {
                return Ok(());
            }
            let frame = self.frames.next().expect("peeked").expect("peeked a frame");
            let out = self.ingest.push(&frame)?;
            let cost = self.cfg.pipeline.cost.ingest(out.pixels, out.kept);
            self.ingest_free = next + cost;
            self.ingest_busy += cost;
            if let Some(chunk) = out.chunk {
                self.emit(self.ingest_free, chunk);
            }
        }
    }

    fn commit(&mut self, start: f64, time: f64, update: MemoryUpdate, answer_id: Option<usize>) {
        self.report.commits.push(CommitEvent {
            version: self.store.version(),
            start,
            time,
            update,
            answer_id,
        });
        if self.cfg.pipeline.verify_snapshots {
            self.report.snapshot_checks += 1;
            if self.store.tree().check_invariants().is_err() {
                self.report.snapshot_violations += 1;
            }
        }
    }

    fn run_chunk(&mut self) {
        let (ready, chunk) = self.chunks.pop_front().expect("chunk job");
        let start = ready.max(self.device_free);
        self.last_chunk_start = start;
        match self.store.apply_chunk(&chunk, self.ports, start) {
            Ok(work) => {
                self.device_free = start + self.cfg.pipeline.cost.formation(&work);
                self.report.chunks += 1;
                self.commit(
                    start,
                    self.device_free,
                    MemoryUpdate::Chunk { index: chunk.index },
                    None,
                );
            }
            Err(_) => {
                self.device_free = start;
                self.report.formation_errors += 1;
            }
        }
    }

    fn run_dialogue(&mut self) {
        let turn = self.turns.pop_front().expect("dialogue job");
        let start = turn.request.max(self.device_free);
        match self
            .store
            .apply_dialogue(&turn.question, &turn.answer, self.ports, start)
        {
            Ok(index) => {
                self.device_free = start + self.cfg.pipeline.cost.text_encode;
                self.commit(
                    start,
                    self.device_free,
                    MemoryUpdate::Dialogue { turn: index },
                    Some(turn.answer_id),
                );
            }
            Err(_) => {
                self.device_free = start;
                self.report.formation_errors += 1;
            }
        }
    }

    fn run_query(&mut self) -> Result<()> {
        let (id, req) = self.queries.pop_front().expect("query job");
        let cost = &self.cfg.pipeline.cost;
        let start = req.t_input.max(self.device_free);
        let snapshot = self.store.snapshot();
        if self.cfg.pipeline.verify_snapshots {
            self.report.snapshot_checks += 1;
            if snapshot.tree.check_invariants().is_err() {
                self.report.snapshot_violations += 1;
            }
        }
        let outcome = answer_query(&snapshot, &req.question, self.cfg, self.ports);
        let t_start = start + cost.retrieval(outcome.similarities, self.cfg.stub.text_dim);
        let answer = generate(&outcome, self.ports);
        let t_done = match (&outcome.bundle, &answer) {
            (Ok(b), Some(Ok(_))) => t_start + cost.generation(b.token_rows()),
            _ => t_start,
        };
        self.device_free = t_done;
        let rec = record(id, &req, &outcome, answer.as_ref(), snapshot.version, t_start, t_done);
        if let Some(Ok(text)) = answer {
            self.turns.push_back(PendingTurn {
                request: t_done,
                question: req.question.clone(),
                answer: text,
                answer_id: id,
            });
            let hw = &mut self.report.queue_high_water.dialogue;
            *hw = (*hw).max(self.turns.len());
        }
        self.transcript.append(&rec)?;
        self.report.answers.push(rec);
        Ok(())
    }

    fn finish(mut self) -> RunReport {
        let r = &mut self.report;
        r.frames_in = self.ingest.frames_in;
        r.frames_kept = self.ingest.frames_kept;
        r.ingest_errors = self.ingest.errors;
        r.ingest_seconds = self.ingest_busy;
        r.effective_fps = fps(r.frames_in, self.ingest_busy);
        r.kept_fps = fps(r.frames_kept, self.ingest_busy);
        r.final_version = self.store.version();
        r.tree_levels = self.store.tree().level_sizes();
        r.dialogue_turns = self.store.snapshot().dialogue.len();
        self.report
    }
}
