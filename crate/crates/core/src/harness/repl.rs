use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{AnswerRecord, FrameSource, LiveEngine, RunReport};
use crate::ports::PortSet;

const HELP: &str = "type a question, `:wait T` to let the stream reach T seconds, `:status`, or `quit`";

/// Interactive session over a live wall-clock engine. Frames stream in the
/// background while questions are read line by line from `input`.
pub fn repl<R: BufRead, W: Write>(
    cfg: &EngineConfig,
    ports: PortSet,
    source: FrameSource<'_>,
    input: R,
    mut out: W,
) -> Result<RunReport> {
    let mut engine = LiveEngine::start(cfg, ports)?;
    let stop = AtomicBool::new(false);
    let session = std::thread::scope(|scope| {
        let feeder = scope.spawn(|| feed(&engine, source, &stop));
        let session = session(&engine, input, &mut out);
        stop.store(true, Ordering::SeqCst);
        let fed = feeder.join().expect("frame feeder panicked");
        session.and(fed)
    });
    let report = engine.finish()?;
    session?;
    writeln!(
        out,
        "done: frames_in={} frames_kept={} answers={} tree={:?}",
        report.frames_in,
        report.frames_kept,
        report.answers.len(),
        report.tree_levels
    )?;
    Ok(report)
}

fn feed(engine: &LiveEngine, source: FrameSource<'_>, stop: &AtomicBool) -> Result<()> {
    for frame in source {
        let frame = frame?;
        loop {
            if stop.load(Ordering::SeqCst) {
                return Ok(());
            }
            let ahead = frame.timestamp - engine.now();
            if ahead <= 0.0 {
                break;
            }
            let speed = engine.speed();
            std::thread::sleep(Duration::from_secs_f64((ahead / speed).min(0.02)));
        }
        match engine.push_frame(frame) {
            Err(Error::EngineStopped) => return Ok(()),
            r => r?,
        }
    }
    Ok(())
}

fn session<R: BufRead, W: Write>(engine: &LiveEngine, input: R, out: &mut W) -> Result<()> {
    writeln!(out, "{HELP}")?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "quit" || line == "exit" {
            break;
        }
        if let Some(arg) = line.strip_prefix(":wait") {
            match arg.trim().parse::<f64>() {
                Ok(t) if t.is_finite() => {
                    engine.wait_until(t);
                    writeln!(out, "t={:.2}", engine.now())?;
                }
                _ => writeln!(out, "usage: :wait SECONDS")?,
            }
            continue;
        }
        if line == ":status" {
            let snap = engine.snapshot();
            writeln!(
                out,
                "t={:.2} version={} tree={:?} turns={}",
                engine.now(),
                snap.version,
                snap.tree.level_sizes(),
                snap.dialogue.len()
            )?;
            continue;
        }
        if line.starts_with(':') {
            writeln!(out, "{HELP}")?;
            continue;
        }
        let rec = engine.submit_query(line)?;
        print_answer(out, &rec)?;
    }
    Ok(())
}

fn print_answer<W: Write>(out: &mut W, rec: &AnswerRecord) -> Result<()> {
    match &rec.error {
        Some(e) => writeln!(out, "error: {e}")?,
        None => writeln!(out, "answer: {}", rec.answer)?,
    }
    let path: Vec<String> = rec
        .path
        .iter()
        .map(|s| format!("L{}#{} ({:.3})", s.level, s.index, s.similarity))
        .collect();
    writeln!(
        out,
        "rpd: {:.3}s (t_input {:.2}, snapshot v{})",
        rec.rpd, rec.t_input, rec.snapshot_version
    )?;
    writeln!(
        out,
        "path: {}",
        if path.is_empty() {
            "(empty tree)".into()
        } else {
            path.join(" > ")
        }
    )?;
    writeln!(out, "best_caption: {}", rec.best_caption)?;
    Ok(())
}
