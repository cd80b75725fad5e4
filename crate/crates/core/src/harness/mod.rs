//! Synthetic scenes, query traces, metrics, benchmark runs, sweeps and the
//! interactive session.

mod bench;
mod metrics;
mod repl;
pub mod scenes;
mod trace;

pub use bench::{judge_report, run_benchmark, run_trace, sweep, write_sweep_csv, SweepParam, SweepRow};
pub use metrics::{accuracy, coherence, compute_metrics, mean_score, percentile, rpd, MetricsReport, TaskMetrics};
pub use repl::repl;
pub use scenes::{synth_scenes, SceneDef, SceneSpec, SceneStream, Timeline, TimelineEntry};
pub use trace::{
    follow_up_question, gen_trace, lm_question, FrameSourceSpec, TaskType, Trace, TraceGenConfig, TraceQuery,
    SCENE_TAGS,
};
