#![allow(dead_code)]

use std::path::Path;

use streammem::frame_gate::Frame;
use streammem::harness::{gen_trace, run_trace, SceneDef, SceneSpec, TaskType, Trace, TraceGenConfig, TraceQuery};
use streammem::pipeline::{ClockMode, FrameSource, RunReport};
use streammem::ports::PortSet;
use streammem::{EngineConfig, Preset};

pub fn base() -> (EngineConfig, PortSet) {
    let cfg = EngineConfig::preset(Preset::Base);
    let ports = PortSet::stub(&cfg.stub);
    (cfg, ports)
}

pub fn trace(seed: u64) -> Trace {
    gen_trace(&TraceGenConfig {
        seed,
        ..TraceGenConfig::default()
    })
    .unwrap()
}

/// Three short scenes, handy where a full generated trace is too slow.
pub fn short_spec(seed: u64) -> SceneSpec {
    let scene = |tag: &str, motion: f64| SceneDef {
        tags: vec![tag.to_string()],
        duration: 4.0,
        motion,
    };
    SceneSpec {
        scenes: vec![scene("kitchen", 0.4), scene("garden", 0.2), scene("office", 0.5)],
        seed,
        ..SceneSpec::default()
    }
}

pub fn frames_of(spec: &SceneSpec) -> Vec<Frame> {
    streammem::harness::synth_scenes(spec).unwrap().0.collect()
}

pub fn source(frames: Vec<Frame>) -> FrameSource<'static> {
    Box::new(frames.into_iter().map(Ok))
}

/// Same frames as `t`, with one long-memory question every `every` seconds.
pub fn dense(t: &Trace, every: f64) -> Trace {
    let end = t.timeline().unwrap().entries.last().unwrap().end;
    let queries = (1..)
        .map(|i| i as f64 * every)
        .take_while(|&s| s < end)
        .map(|s| TraceQuery {
            t_input: s,
            question: "What did you see in the kitchen?".into(),
            reference_answer: "scene: kitchen".into(),
            task_type: TaskType::LM,
            follows: None,
        })
        .collect();
    Trace {
        source: t.source.clone(),
        queries,
    }
}

pub fn run_sim(t: &Trace, cfg: &EngineConfig, ports: &PortSet) -> RunReport {
    run_trace(t, Path::new("."), cfg, ports, ClockMode::Sim).unwrap()
}
