//! Synthetic tagged scene streams with a ground-truth timeline.
//!
//! Each scene renders a smooth texture (a sum of low-frequency plane waves
//! keyed by its tags) translated by `motion * max_shift` pixels per frame in a
//! fixed direction, plus seeded Gaussian noise.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_gate::Frame;
use crate::hashing::{derive_seed, fnv1a};

const WAVES: usize = 5;
const SEED_TEXTURE: u64 = 0x7465_7874;
const SEED_DIRECTION: u64 = 0x64_6972;
const SEED_NOISE: u64 = 0x6e6f_6973;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDef {
    pub tags: Vec<String>,
    /// Seconds.
    pub duration: f64,
    /// In `[0, 1]`; scales `max_shift`.
    pub motion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub scenes: Vec<SceneDef>,
    pub fps: f64,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Pixels per frame at motion 1.
    pub max_shift: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            scenes: Vec::new(),
            fps: 10.0,
            noise: 0.01,
            seed: 0,
            width: 64,
            height: 48,
            max_shift: 3.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::invalid("fps must be > 0"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be >= 0"));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::invalid("frames must be at least 2x2"));
        }
        if !(self.max_shift >= 0.0 && self.max_shift.is_finite()) {
            return Err(Error::invalid("max_shift must be >= 0"));
        }
        for (i, s) in self.scenes.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::invalid(format!("scene {i}: duration must be > 0")));
            }
            if !(0.0..=1.0).contains(&s.motion) {
                return Err(Error::invalid(format!("scene {i}: motion must be in [0,1]")));
            }
        }
        Ok(())
    }

    /// Frames rendered for each scene (at least one).
    pub fn frame_counts(&self) -> Vec<usize> {
        self.scenes
            .iter()
            .map(|s| ((s.duration * self.fps).round() as usize).max(1))
            .collect()
    }

    pub fn total_frames(&self) -> usize {
        self.frame_counts().iter().sum()
    }

    /// Stream length in seconds.
    pub fn duration(&self) -> f64 {
        self.total_frames() as f64 / self.fps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub start: f64,
    /// Exclusive.
    pub end: f64,
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub entries: Vec<TimelineEntry>,
}

impl Timeline {
    pub fn tags_at(&self, t: f64) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|e| e.start <= t && t < e.end)
            .map(|e| e.tags.as_slice())
    }
}

#[derive(Clone, Debug)]
struct Texture {
    base: f64,
    waves: [(f64, f64, f64, f64); WAVES],
}

impl Texture {
    fn for_tags(tags: &[String], seed: u64) -> Self {
        let key = fnv1a(tags.join("\u{1f}").as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SEED_TEXTURE, key]));
        let base = rng.random_range(0.4..0.6);
        let waves = std::array::from_fn(|_| {
            let amp = rng.random_range(0.03..0.07);
            let freq = TAU / rng.random_range(12.0..40.0);
            let angle = rng.random_range(0.0..TAU);
            let phase = rng.random_range(0.0..TAU);
            (amp, freq * angle.cos(), freq * angle.sin(), phase)
        });
        Self { base, waves }
    }

    /// Render the `w x h` window whose origin sits at `(-ox, -oy)` in texture space.
    /// Each wave splits as sin(a + b) = sin a cos b + cos a sin b over columns and rows.
    fn render(&self, w: usize, h: usize, ox: f64, oy: f64) -> Vec<f64> {
        let mut px = vec![self.base; w * h];
        for (a, fx, fy, p) in &self.waves {
            let cols: Vec<(f64, f64)> = (0..w).map(|x| (fx * (x as f64 - ox) + p).sin_cos()).collect();
            for y in 0..h {
                let (sb, cb) = (fy * (y as f64 - oy)).sin_cos();
                let row = &mut px[y * w..(y + 1) * w];
                for (v, (sa, ca)) in row.iter_mut().zip(&cols) {
                    *v += a * (sa * cb + ca * sb);
                }
            }
        }
        px
    }
}

struct SceneState {
    texture: Texture,
    step: (f64, f64),
    frames: usize,
    tags: Vec<String>,
}

/// Lazily rendered frames of a [`SceneSpec`].
pub struct SceneStream {
    spec: SceneSpec,
    scenes: Vec<SceneState>,
    scene: usize,
    in_scene: usize,
    index: usize,
}

impl Iterator for SceneStream {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        while self.scenes.get(self.scene)?.frames == self.in_scene {
            self.scene += 1;
            self.in_scene = 0;
        }
        let s = &self.scenes[self.scene];
        let (w, h) = (self.spec.width, self.spec.height);
        let (ox, oy) = (s.step.0 * self.in_scene as f64, s.step.1 * self.in_scene as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.spec.seed, &[SEED_NOISE, self.index as u64]));
        let noise = Normal::new(0.0, self.spec.noise).expect("validated noise");
        let mut px = s.texture.render(w, h, ox, oy);
        for v in &mut px {
            if self.spec.noise > 0.0 {
                *v += noise.sample(&mut rng);
            }
            *v = v.clamp(0.0, 1.0);
        }
        let t = self.index as f64 / self.spec.fps;
        self.index += 1;
        self.in_scene += 1;
        let frame = Frame::new(w, h, px, t).expect("rendered frame is valid");
        Some(frame.with_tags(s.tags.iter().cloned()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.total_frames() - self.index;
        (left, Some(left))
    }
}

/// Render a scene spec as a frame stream plus its ground-truth timeline.
pub fn synth_scenes(spec: &SceneSpec) -> Result<(SceneStream, Timeline)> {
    spec.validate()?;
    let counts = spec.frame_counts();
    let mut timeline = Timeline::default();
    let mut scenes = Vec::with_capacity(spec.scenes.len());
    let mut start = 0usize;
    for (i, (def, &frames)) in spec.scenes.iter().zip(&counts).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[SEED_DIRECTION, i as u64]));
        let angle = rng.random_range(0.0..TAU);
        let shift = def.motion * spec.max_shift;
        scenes.push(SceneState {
            texture: Texture::for_tags(&def.tags, spec.seed),
            step: (shift * angle.cos(), shift * angle.sin()),
            frames,
            tags: def.tags.clone(),
        });
        timeline.entries.push(TimelineEntry {
            start: start as f64 / spec.fps,
            end: (start + frames) as f64 / spec.fps,
            tags: def.tags.clone(),
        });
        start += frames;
    }
    Ok((
        SceneStream {
            spec: spec.clone(),
            scenes,
            scene: 0,
            in_scene: 0,
            index: 0,
        },
        timeline,
    ))
}
