use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use streammem::harness::{gen_trace, repl, run_benchmark, sweep, write_sweep_csv, SweepParam, Trace, TraceGenConfig};
use streammem::pipeline::{ClockMode, RunReport};
use streammem::ports::PortSet;
use streammem::{EngineConfig, Error, Preset, Result};

#[derive(Parser)]
#[command(name = "streammem", version, about = "Streaming hierarchical memory engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    Stub,
    Remote,
}

#[derive(Args)]
struct EngineArgs {
    /// Parameter preset for (t, L, g, C).
    #[arg(long, value_enum, default_value = "base")]
    preset: Preset,
    /// JSON file overriding any configuration field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for clustering and sampling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "stub")]
    backend: Backend,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace and write report.json and transcript.jsonl.
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "sim")]
        clock: ClockMode,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Replay a trace once per parameter value and write sweep.csv.
    Sweep {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "sim")]
        clock: ClockMode,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Stream a trace's frames in real time and answer questions from stdin.
    Repl {
        /// Trace whose frame source is streamed; a generated scene stream when absent.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Stream seconds per wall second.
        #[arg(long)]
        speed: Option<f64>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Write a synthetic scene trace.
    GenTrace {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        scenes: usize,
        #[arg(long, default_value_t = 20.0)]
        scene_duration: f64,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
    },
}

fn engine_setup(args: &EngineArgs) -> Result<(EngineConfig, PortSet)> {
    let mut cfg = EngineConfig::preset(args.preset);
    if let Some(path) = &args.config {
        cfg = cfg.load_overrides(path)?;
    }
    if let Some(seed) = args.seed {
        cfg.memory.seed = seed;
    }
    cfg.validate()?;
    let ports = match args.backend {
        Backend::Stub => PortSet::stub(&cfg.stub),
        Backend::Remote => {
            let remote = cfg
                .remote
                .as_ref()
                .ok_or_else(|| Error::invalid("--backend remote needs a `remote` section in --config"))?;
            PortSet::remote(remote, &cfg.stub)?
        }
    };
    Ok((cfg, ports))
}

fn summarize(out: &mut impl Write, report: &RunReport) -> io::Result<()> {
    writeln!(
        out,
        "frames_in={} frames_kept={} chunks={} tree={:?} effective_fps={:.1}",
        report.frames_in, report.frames_kept, report.chunks, report.tree_levels, report.effective_fps
    )?;
    match &report.metrics {
        Some(m) => writeln!(
            out,
            "answers={} accuracy={:.3} mean_score={:.2} rpd_mean={:.3}s rpd_p95={:.3}s errors={}",
            m.count, m.accuracy, m.mean_score, m.rpd_mean, m.rpd_p95, m.errors
        ),
        None => writeln!(out, "answers=0"),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Run {
            trace,
            out,
            clock,
            engine,
        } => {
            let (cfg, ports) = engine_setup(&engine)?;
            let report = run_benchmark(&trace, &cfg, &ports, &out, clock)?;
            summarize(&mut stdout, &report)?;
            writeln!(stdout, "wrote {}", out.join("report.json").display())?;
        }
        Command::Sweep {
            trace: path,
            param,
            values,
            out,
            clock,
            engine,
        } => {
            let (cfg, ports) = engine_setup(&engine)?;
            let trace = Trace::load(&path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let rows = sweep(&trace, base, param, &values, &cfg, &ports, clock)?;
            std::fs::create_dir_all(&out)?;
            let file = out.join("sweep.csv");
            write_sweep_csv(&rows, BufWriter::new(std::fs::File::create(&file)?))?;
            write_sweep_csv(&rows, &mut stdout)?;
            writeln!(stdout, "wrote {}", file.display())?;
        }
        Command::Repl { trace, speed, engine } => {
            let (mut cfg, ports) = engine_setup(&engine)?;
            if let Some(speed) = speed {
                cfg.pipeline.speed = speed;
                cfg.validate()?;
            }
            let (trace, base) = match &trace {
                Some(p) => (Trace::load(p)?, p.parent().unwrap_or(Path::new(".")).to_path_buf()),
                None => (gen_trace(&TraceGenConfig::default())?, PathBuf::from(".")),
            };
            let source = trace.frames(&base)?;
            repl(&cfg, ports, source, io::stdin().lock(), stdout)?;
        }
        Command::GenTrace {
            out,
            seed,
            scenes,
            scene_duration,
            fps,
        } => {
            let trace = gen_trace(&TraceGenConfig {
                scenes,
                scene_duration,
                fps,
                seed,
                ..TraceGenConfig::default()
            })?;
            trace.save(&out)?;
            writeln!(stdout, "wrote {} ({} queries)", out.display(), trace.queries.len())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
