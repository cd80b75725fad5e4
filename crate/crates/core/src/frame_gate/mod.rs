//! Selective frame stacking: a global Lucas-Kanade motion estimate decides
//! whether a frame is worth encoding, and kept embeddings accumulate in a
//! fixed-length vision buffer that flushes whole chunks.

mod buffer;
pub mod pgm;

pub use buffer::{VisionBuffer, VisionEmbedding};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grayscale frame with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    pub timestamp: f64,
    /// Scene labels carried by synthetic streams. Never read by the gate.
    pub tags: Vec<String>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, timestamp: f64) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!(
                "frame must be at least 2x2, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::dims(width * height, pixels.len()));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("intensity {bad} outside [0,1]")));
        }
        if !timestamp.is_finite() {
            return Err(Error::NonFinite("frame timestamp"));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp,
            tags: Vec::new(),
        })
    }

    /// Build from interleaved RGB triples; grayscale is the channel mean.
    pub fn from_rgb(width: usize, height: usize, rgb: &[f64], timestamp: f64) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::dims(width * height * 3, rgb.len()));
        }
        let gray = rgb.chunks_exact(3).map(|c| (c[0] + c[1] + c[2]) / 3.0).collect();
        Self::new(width, height, gray, timestamp)
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionEstimate {
    pub u: f64,
    pub v: f64,
    pub magnitude: f64,
    pub degenerate: bool,
}

impl MotionEstimate {
    fn degenerate() -> Self {
        Self {
            u: 0.0,
            v: 0.0,
            magnitude: 0.0,
            degenerate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// Keep a frame when its normalized motion magnitude exceeds this.
    pub threshold: f64,
    /// Displacement (px/frame) that maps to magnitude 1.
    pub norm_scale: f64,
    pub singular_eps: f64,
    /// Frames are box-downsampled until the longer edge fits this size. 0 disables.
    pub downsample_max_edge: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            threshold: 0.35,
            norm_scale: 3.0,
            singular_eps: 1e-4,
            downsample_max_edge: 64,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0,1]", self.threshold)));
        }
        if !(self.norm_scale > 0.0) {
            return Err(Error::invalid("norm_scale must be > 0"));
        }
        if !(self.singular_eps > 0.0) {
            return Err(Error::invalid("singular_eps must be > 0"));
        }
        Ok(())
    }
}

/// Downsampled intensity plane; `scale` converts its pixel units back to source pixels.
#[derive(Clone, Debug)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
    scale: f64,
}

impl Plane {
    fn from_frame(frame: &Frame, max_edge: usize) -> Self {
        let longest = frame.width.max(frame.height);
        let mut factor = if max_edge > 0 && longest > max_edge {
            longest.div_ceil(max_edge)
        } else {
            1
        };
        factor = factor.min(frame.width / 2).min(frame.height / 2).max(1);
        if factor == 1 {
            return Self {
                width: frame.width,
                height: frame.height,
                data: frame.pixels.clone(),
                scale: 1.0,
            };
        }
        let width = frame.width / factor;
        let height = frame.height / factor;
        let area = (factor * factor) as f64;
        let mut data = Vec::with_capacity(width * height);
        for by in 0..height {
            for bx in 0..width {
                let mut acc = 0.0;
                for y in by * factor..(by + 1) * factor {
                    let row = &frame.pixels[y * frame.width..];
                    acc += row[bx * factor..(bx + 1) * factor].iter().sum::<f64>();
                }
                data.push(acc / area);
            }
        }
        Self {
            width,
            height,
            data,
            scale: factor as f64,
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

fn check_same_dims(prev: &Frame, cur: &Frame) -> Result<()> {
    if prev.width != cur.width || prev.height != cur.height {
        return Err(Error::dims(
            format!("{}x{}", prev.width, prev.height),
            format!("{}x{}", cur.width, cur.height),
        ));
    }
    Ok(())
}

/// Single global Lucas-Kanade step between two frames.
pub fn estimate_motion(prev: &Frame, cur: &Frame, cfg: &GateConfig) -> Result<MotionEstimate> {
    check_same_dims(prev, cur)?;
    let a = Plane::from_frame(prev, cfg.downsample_max_edge);
    let b = Plane::from_frame(cur, cfg.downsample_max_edge);
    Ok(lucas_kanade(&a, &b, cfg))
}

fn lucas_kanade(prev: &Plane, cur: &Plane, cfg: &GateConfig) -> MotionEstimate {
    let (w, h) = (prev.width, prev.height);
    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    // Spatial derivatives are averaged over both frames, which keeps the estimate
    // symmetric in time and second-order accurate for translations.
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let ix = 0.25 * (prev.at(x + 1, y) - prev.at(x - 1, y) + cur.at(x + 1, y) - cur.at(x - 1, y));
            let iy = 0.25 * (prev.at(x, y + 1) - prev.at(x, y - 1) + cur.at(x, y + 1) - cur.at(x, y - 1));
            let it = cur.at(x, y) - prev.at(x, y);
            sxx += ix * ix;
            sxy += ix * iy;
            syy += iy * iy;
            sxt += ix * it;
            syt += iy * it;
        }
    }
    let det = sxx * syy - sxy * sxy;
    let trace = sxx + syy;
    if det.abs() < cfg.singular_eps * (trace * trace + 1e-12) {
        return MotionEstimate::degenerate();
    }
    let (bx, by) = (-sxt, -syt);
    let u = (syy * bx - sxy * by) / det * prev.scale;
    let v = (sxx * by - sxy * bx) / det * prev.scale;
    let raw = u.hypot(v);
    MotionEstimate {
        u,
        v,
        magnitude: (raw / cfg.norm_scale).min(1.0),
        degenerate: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateDecision {
    Keep(f64),
    Drop(f64),
}

impl GateDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, GateDecision::Keep(_))
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            GateDecision::Keep(m) | GateDecision::Drop(m) => m,
        }
    }
}

/// Per-stream gate state. Motion is measured against the last kept frame.
#[derive(Debug)]
pub struct FrameGate {
    cfg: GateConfig,
    last_kept: Option<(Plane, usize, usize)>,
    last_timestamp: Option<f64>,
}

impl FrameGate {
    pub fn new(cfg: GateConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            last_kept: None,
            last_timestamp: None,
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    pub fn gate(&mut self, cur: &Frame) -> Result<GateDecision> {
        if let Some(last) = self.last_timestamp {
            if cur.timestamp <= last {
                return Err(Error::invalid(format!(
                    "frame timestamps must strictly increase ({} after {last})",
                    cur.timestamp
                )));
            }
        }
        let plane = Plane::from_frame(cur, self.cfg.downsample_max_edge);
        let decision = match &self.last_kept {
            None => GateDecision::Keep(1.0),
            Some((prev, w, h)) => {
                if (*w, *h) != (cur.width, cur.height) {
                    return Err(Error::dims(format!("{w}x{h}"), format!("{}x{}", cur.width, cur.height)));
                }
                let m = lucas_kanade(prev, &plane, &self.cfg).magnitude;
                if m > self.cfg.threshold {
                    GateDecision::Keep(m)
                } else {
                    GateDecision::Drop(m)
                }
            }
        };
        self.last_timestamp = Some(cur.timestamp);
        if decision.is_keep() {
            self.last_kept = Some((plane, cur.width, cur.height));
        }
        Ok(decision)
    }
}
