use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::harness::metrics::compute_metrics;
use crate::harness::trace::Trace;
use crate::pipeline::{run, ClockMode, RunReport};
use crate::ports::PortSet;

/// Judge every answer against its trace reference and attach metrics.
pub fn judge_report(report: &mut RunReport, trace: &Trace, ports: &PortSet) -> Result<()> {
    for a in &mut report.answers {
        let q = trace
            .queries
            .get(a.id)
            .ok_or_else(|| Error::invalid(format!("answer {} has no trace query", a.id)))?;
        a.judgement = Some(ports.judge.judge(&q.question, &q.reference_answer, &a.answer)?);
    }
    report.metrics = compute_metrics(&report.answers, report.config.accuracy_threshold)?;
    Ok(())
}

/// Run a loaded trace end to end, judged. `base_dir` resolves relative frame directories.
pub fn run_trace(
    trace: &Trace,
    base_dir: &Path,
    cfg: &EngineConfig,
    ports: &PortSet,
    clock: ClockMode,
) -> Result<RunReport> {
    let mut report = run(trace.frames(base_dir)?, trace.requests(), cfg, ports, clock)?;
    judge_report(&mut report, trace, ports)?;
    Ok(report)
}

/// Run a trace file and write `report.json` and `transcript.jsonl` into `out_dir`.
pub fn run_benchmark(
    trace_path: &Path,
    cfg: &EngineConfig,
    ports: &PortSet,
    out_dir: &Path,
    clock: ClockMode,
) -> Result<RunReport> {
    let trace = Trace::load(trace_path)?;
    let base = trace_path.parent().unwrap_or(Path::new("."));
    let report = run_trace(&trace, base, cfg, ports, clock)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.json"), report.to_json_pretty())?;
    let mut w = BufWriter::new(File::create(out_dir.join("transcript.jsonl"))?);
    for a in &report.answers {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(report)
}

/// Memory parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    /// Motion threshold.
    #[value(name = "t")]
    Threshold,
    /// Chunk length.
    #[value(name = "L")]
    ChunkLen,
    /// Group size.
    #[value(name = "g")]
    GroupSize,
    /// Clustering goal.
    #[value(name = "C")]
    ClusterGoal,
}

impl SweepParam {
    pub fn apply(self, cfg: &mut EngineConfig, value: f64) -> Result<()> {
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::invalid(format!(
                    "{self:?} needs a positive integer, got {value}"
                )))
            }
        };
        match self {
            SweepParam::Threshold => cfg.memory.threshold = value,
            SweepParam::ChunkLen => cfg.memory.chunk_len = count()?,
            SweepParam::GroupSize => cfg.memory.group_size = count()?,
            SweepParam::ClusterGoal => cfg.memory.cluster_goal = count()?,
        }
        cfg.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// Empty when the trace has no queries.
    pub accuracy: Option<f64>,
    pub rpd_mean: Option<f64>,
    pub fps: f64,
    pub kept_ratio: f64,
}

/// One judged run per value, everything else fixed.
pub fn sweep(
    trace: &Trace,
    base_dir: &Path,
    param: SweepParam,
    values: &[f64],
    cfg: &EngineConfig,
    ports: &PortSet,
    clock: ClockMode,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|&value| {
            let mut c = cfg.clone();
            param.apply(&mut c, value)?;
            let report = run_trace(trace, base_dir, &c, ports, clock)?;
            Ok(SweepRow {
                value,
                accuracy: report.metrics.as_ref().map(|m| m.accuracy),
                rpd_mean: report.metrics.as_ref().map(|m| m.rpd_mean),
                fps: report.effective_fps,
                kept_ratio: report.kept_ratio(),
            })
        })
        .collect()
}

/// CSV with header `value,accuracy,rpd_mean,fps,kept_ratio`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    if rows.is_empty() {
        w.write_record(["value", "accuracy", "rpd_mean", "fps", "kept_ratio"])
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}
