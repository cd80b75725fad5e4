//! Engine configuration, presets and JSON overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::frame_gate::GateConfig;
use crate::memory::MemoryConfig;
use crate::pipeline::PipelineConfig;
use crate::ports::{RemoteBackendConfig, StubConfig};
use crate::retrieval::RetrievalConfig;

/// Named parameter sets for threshold, chunk length, group size and clustering goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Slow,
    Base,
    Fast,
}

impl Preset {
    /// `(t, L, g, C)`.
    pub fn params(self) -> (f64, usize, usize, usize) {
        match self {
            Preset::Slow => (0.13, 35, 15, 5),
            Preset::Base => (0.35, 25, 10, 5),
            Preset::Fast => (0.58, 30, 15, 5),
        }
    }

    pub fn apply(self, m: &mut MemoryConfig) {
        let (t, l, g, c) = self.params();
        m.threshold = t;
        m.chunk_len = l;
        m.group_size = g;
        m.cluster_goal = c;
    }
}

/// Optical-flow settings other than the threshold, which lives in [`MemoryConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub norm_scale: f64,
    pub singular_eps: f64,
    pub downsample_max_edge: usize,
}

impl Default for MotionConfig {
    fn default() -> Self {
        let g = GateConfig::default();
        Self {
            norm_scale: g.norm_scale,
            singular_eps: g.singular_eps,
            downsample_max_edge: g.downsample_max_edge,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Preset the memory parameters started from, if any.
    pub preset: Option<Preset>,
    pub memory: MemoryConfig,
    pub motion: MotionConfig,
    pub retrieval: RetrievalConfig,
    pub pipeline: PipelineConfig,
    pub stub: StubConfig,
    pub remote: Option<RemoteBackendConfig>,
    /// Judge score counted as correct.
    pub accuracy_threshold: u8,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::preset(Preset::Base)
    }
}

impl EngineConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut memory = MemoryConfig::default();
        preset.apply(&mut memory);
        Self {
            preset: Some(preset),
            memory,
            motion: MotionConfig::default(),
            retrieval: RetrievalConfig::default(),
            pipeline: PipelineConfig::default(),
            stub: StubConfig::default(),
            remote: None,
            accuracy_threshold: 3,
        }
    }

    pub fn gate_config(&self) -> GateConfig {
        GateConfig {
            threshold: self.memory.threshold,
            norm_scale: self.motion.norm_scale,
            singular_eps: self.motion.singular_eps,
            downsample_max_edge: self.motion.downsample_max_edge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.memory.validate()?;
        self.gate_config().validate()?;
        self.pipeline.validate()?;
        self.stub.validate()?;
        if let Some(r) = &self.remote {
            r.validate()?;
        }
        if self.accuracy_threshold > 5 {
            return Err(Error::invalid("accuracy_threshold must be in 0..=5"));
        }
        if !self.retrieval.min_sim.is_finite() || self.retrieval.dialogue_top_k == 0 {
            return Err(Error::invalid(
                "retrieval.min_sim must be finite and dialogue_top_k >= 1",
            ));
        }
        Ok(())
    }

    /// Deep-merge a JSON object into this configuration. Keys of the memory and
    /// motion sections may also be given at top level (`{"threshold": 0.2}`).
    /// Unknown keys are rejected.
    pub fn with_overrides(self, overrides: &Value) -> Result<Self> {
        let Value::Object(map) = overrides else {
            return Err(Error::invalid("config overrides must be a JSON object"));
        };
        let mut base = serde_json::to_value(&self)?;
        for (key, value) in map {
            let target = if base.get(key).is_some() {
                key.clone()
            } else if base["memory"].get(key).is_some() {
                format!("memory.{key}")
            } else if base["motion"].get(key).is_some() {
                format!("motion.{key}")
            } else {
                return Err(Error::invalid(format!("unknown config key `{key}`")));
            };
            let slot = target.split('.').fold(&mut base, |v, k| &mut v[k]);
            merge(slot, value, &target)?;
        }
        let cfg: EngineConfig =
            serde_json::from_value(base).map_err(|e| Error::invalid(format!("bad config value: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_overrides(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("config {} is not JSON: {e}", path.display())))?;
        self.with_overrides(&value)
    }
}

fn merge(slot: &mut Value, value: &Value, path: &str) -> Result<()> {
    match (slot, value) {
        (Value::Object(dst), Value::Object(src)) => {
            for (k, v) in src {
                let child = format!("{path}.{k}");
                match dst.get_mut(k) {
                    Some(d) => merge(d, v, &child)?,
                    None => return Err(Error::invalid(format!("unknown config key `{child}`"))),
                }
            }
            Ok(())
        }
        (slot, value) => {
            *slot = value.clone();
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_load_table_values() {
        for (p, want) in [
            (Preset::Slow, (0.13, 35, 15, 5)),
            (Preset::Base, (0.35, 25, 10, 5)),
            (Preset::Fast, (0.58, 30, 15, 5)),
        ] {
            let m = EngineConfig::preset(p).memory;
            assert_eq!((m.threshold, m.chunk_len, m.group_size, m.cluster_goal), want);
        }
    }

    #[test]
    fn flat_and_nested_overrides() {
        let cfg = EngineConfig::default()
            .with_overrides(
                &json!({"threshold": 0.2, "motion": {"norm_scale": 2.0}, "pipeline": {"cost": {"generate_base": 0.1}}}),
            )
            .unwrap();
        assert_eq!(cfg.memory.threshold, 0.2);
        assert_eq!(cfg.motion.norm_scale, 2.0);
        assert_eq!(cfg.pipeline.cost.generate_base, 0.1);
        assert_eq!(cfg.memory.chunk_len, 25);
    }

    #[test]
    fn remote_section_can_be_added() {
        let cfg = EngineConfig::default()
            .with_overrides(&json!({"remote": {"base_url": "http://localhost:9", "timeout": 1.0}}))
            .unwrap();
        let r = cfg.remote.unwrap();
        assert_eq!(r.timeout, 1.0);
        assert_eq!(r.retry_count, RemoteBackendConfig::default().retry_count);
    }

    #[test]
    fn bad_overrides_rejected() {
        let base = EngineConfig::default;
        assert!(base().with_overrides(&json!({"thresh": 0.2})).is_err());
        assert!(base().with_overrides(&json!({"memory": {"nope": 1}})).is_err());
        assert!(base().with_overrides(&json!({"threshold": 2.0})).is_err());
        assert!(base().with_overrides(&json!({"chunk_len": "x"})).is_err());
        assert!(base().with_overrides(&json!([1])).is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = EngineConfig::preset(Preset::Fast);
        let back: EngineConfig = serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
