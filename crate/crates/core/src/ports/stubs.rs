//! Deterministic stand-ins for the model ports.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::frame_gate::{Frame, VisionEmbedding};
use crate::hashing::{derive_seed, fnv1a, splitmix64, unit_signed};
use crate::matrix::{norm, Matrix};
use crate::memory::Chunk;
use crate::ports::{Captioner, FrameEncoder, Generator, TextEncoder};
use crate::retrieval::PromptBundle;

/// Lowercased whitespace tokens with leading/trailing punctuation removed.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
}

/// Signed buckets written per token. A single accidental collision then
/// overlaps in one bucket where a shared token overlaps in all of them.
pub const HASH_PROBES: u64 = 4;

/// Signed feature hashing of tokens into `dim` buckets, normalized to unit length.
/// Empty text (or fully cancelling buckets) gives the zero vector.
pub fn hash_text_encode(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 8, "text dimension must be >= 8");
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        let base = fnv1a(token.as_bytes());
        for probe in 0..HASH_PROBES {
            let h = splitmix64(base ^ probe.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % dim as u64) as usize] += sign;
        }
    }
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

#[derive(Clone, Debug)]
pub struct HashTextEncoder {
    dim: usize,
}

impl HashTextEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 8, "text dimension must be >= 8");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl TextEncoder for HashTextEncoder {
    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        Ok(hash_text_encode(text, self.dim))
    }
}

const GRID: usize = 4;
const GRID_FEATURES: usize = GRID * GRID;
const SEED_TAG: u64 = 0x74_6167;
const SEED_GRID: u64 = 0x6772_6964;

/// Frame encoder stub. Each token row mixes a pseudo-random direction keyed by
/// the frame's tags with a fixed random projection of the 4x4 grid of mean
/// intensities, so frames of one scene land close together.
#[derive(Clone, Debug)]
pub struct StubFrameEncoder {
    n: usize,
    d: usize,
    /// Per token row, a `d x 16` projection of the grid features.
    projections: Vec<Matrix>,
    grid_weight: f64,
}

impl StubFrameEncoder {
    pub fn new(n: usize, d: usize) -> Self {
        let projections = (0..n)
            .map(|j| {
                let data = (0..d * GRID_FEATURES)
                    .map(|i| unit_signed(derive_seed(SEED_GRID, &[j as u64, i as u64])))
                    .collect();
                Matrix::from_vec(d, GRID_FEATURES, data).expect("sized above")
            })
            .collect();
        // uniform[-1,1] entries have variance 1/3; this maps an RMS grid
        // deviation r to a contribution of norm about 2r
        let grid_weight = 2.0 / (d as f64 * GRID_FEATURES as f64 / 3.0).sqrt();
        Self {
            n,
            d,
            projections,
            grid_weight,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    fn grid_features(frame: &Frame) -> [f64; GRID_FEATURES] {
        let mut feats = [0.0; GRID_FEATURES];
        let mut counts = [0usize; GRID_FEATURES];
        let (w, h) = (frame.width(), frame.height());
        for y in 0..h {
            let gy = y * GRID / h;
            for x in 0..w {
                let cell = gy * GRID + x * GRID / w;
                feats[cell] += frame.at(x, y);
                counts[cell] += 1;
            }
        }
        for (f, c) in feats.iter_mut().zip(counts) {
            *f = if c > 0 { *f / c as f64 - 0.5 } else { 0.0 };
        }
        feats
    }

    fn tag_direction(&self, tags: &[String], row: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.d];
        let unique: BTreeSet<&str> = tags.iter().map(String::as_str).collect();
        for tag in unique {
            let base = derive_seed(SEED_TAG, &[fnv1a(tag.as_bytes()), row as u64]);
            for (i, x) in v.iter_mut().enumerate() {
                *x += unit_signed(splitmix64(base ^ i as u64));
            }
        }
        let n = norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }
}

impl FrameEncoder for StubFrameEncoder {
    fn encode(&self, frame: &Frame) -> Result<VisionEmbedding> {
        let feats = Self::grid_features(frame);
        let mut tokens = Matrix::zeros(self.n, self.d);
        for j in 0..self.n {
            let tag_part = self.tag_direction(&frame.tags, j);
            let proj = &self.projections[j];
            let row = tokens.row_mut(j);
            for (i, out) in row.iter_mut().enumerate() {
                let g: f64 = proj.row(i).iter().zip(&feats).map(|(a, b)| a * b).sum();
                *out = tag_part[i] + self.grid_weight * g;
            }
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        VisionEmbedding::new(tokens, frame.timestamp, frame.tags.clone())
    }
}

const CAPTION_PREFIX: &str = "scene: ";
const UNKNOWN: &str = "unknown";

fn format_caption(tags: BTreeSet<String>) -> String {
    let known: Vec<String> = tags.into_iter().filter(|t| t != UNKNOWN).collect();
    if known.is_empty() {
        format!("{CAPTION_PREFIX}{UNKNOWN}")
    } else {
        format!("{CAPTION_PREFIX}{}", known.join(", "))
    }
}

/// Caption stub: `"scene: "` followed by the sorted union of tags.
#[derive(Clone, Copy, Debug, Default)]
pub struct TagCaptioner;

impl TagCaptioner {
    /// Tags listed in a caption produced by this captioner.
    pub fn parse_tags(caption: &str) -> Vec<String> {
        caption
            .strip_prefix(CAPTION_PREFIX)
            .unwrap_or(caption)
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect()
    }
}

impl Captioner for TagCaptioner {
    fn caption_chunk(&self, chunk: &Chunk) -> Result<String> {
        Ok(format_caption(chunk.tags().into_iter().collect()))
    }

    fn summarize(&self, captions: &[String]) -> Result<String> {
        Ok(format_caption(
            captions.iter().flat_map(|c| Self::parse_tags(c)).collect(),
        ))
    }
}

/// Generator stub: echoes the retrieved leaf caption and the recalled question, if any.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoGenerator;

pub const NO_VISUAL_MEMORY: &str = "no visual memory";

impl Generator for EchoGenerator {
    fn generate(&self, bundle: &PromptBundle) -> Result<String> {
        let base = if bundle.path.best_caption.is_empty() {
            NO_VISUAL_MEMORY
        } else {
            bundle.path.best_caption.as_str()
        };
        Ok(match &bundle.dialogue_context {
            Some(ctx) => format!("{base} (following up on: {})", ctx.question),
            None => base.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn text_encoding_is_deterministic_unit_norm() {
        let a = hash_text_encode("red cup", 64);
        let b = hash_text_encode("red cup", 64);
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(hash_text_encode("", 64).iter().all(|x| *x == 0.0));
        assert!(hash_text_encode("  ?! ", 64).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn punctuation_and_case_ignored() {
        assert_eq!(hash_text_encode("Kitchen?", 64), hash_text_encode("kitchen", 64));
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let base = hash_text_encode("red cup on table", 512);
        let close = dot(&base, &hash_text_encode("red cup", 512));
        let far = dot(&base, &hash_text_encode("blue door", 512));
        assert!(close > far);
    }

    #[test]
    fn overlap_beats_disjoint_on_generated_corpus() {
        let vocab: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
                (0..n)
                    .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
                    .collect()
            };
            let base = pick(&mut rng, 4);
            let sharing: Vec<String> = base[..2].iter().cloned().chain(pick(&mut rng, 1)).collect();
            let disjoint: Vec<String> = pick(&mut rng, 3).into_iter().filter(|w| !base.contains(w)).collect();
            let b = hash_text_encode(&base.join(" "), 512);
            let s = dot(&b, &hash_text_encode(&sharing.join(" "), 512));
            let d = dot(&b, &hash_text_encode(&disjoint.join(" "), 512));
            assert!(s > d, "{base:?} {sharing:?} {disjoint:?}: {s} <= {d}");
        }
    }

    fn frame(v: f64, tags: &[&str], ts: f64) -> Frame {
        let px = (0..64).map(|i| (v + 0.01 * (i % 8) as f64).min(1.0)).collect();
        Frame::new(8, 8, px, ts).unwrap().with_tags(tags.iter().copied())
    }

    #[test]
    fn frame_encoding_shape_and_determinism() {
        let enc = StubFrameEncoder::new(4, 32);
        let f = frame(0.3, &["kitchen"], 0.0);
        let a = enc.encode(&f).unwrap();
        assert_eq!(a.shape(), (4, 32));
        assert_eq!(a, enc.encode(&f).unwrap());
        for row in a.tokens.iter_rows() {
            assert!((norm(row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_scene_frames_are_closer() {
        let enc = StubFrameEncoder::new(4, 32);
        let mean_cos = |a: &VisionEmbedding, b: &VisionEmbedding| {
            let (x, y) = (a.tokens.mean_row(), b.tokens.mean_row());
            dot(&x, &y) / (norm(&x) * norm(&y))
        };
        let a = enc.encode(&frame(0.3, &["kitchen"], 0.0)).unwrap();
        let b = enc.encode(&frame(0.35, &["kitchen"], 1.0)).unwrap();
        let c = enc.encode(&frame(0.3, &["garden"], 2.0)).unwrap();
        assert!(mean_cos(&a, &b) > mean_cos(&a, &c));
    }

    #[test]
    fn captions() {
        let cap = TagCaptioner;
        assert_eq!(
            cap.summarize(&["scene: kitchen".into(), "scene: garden".into()])
                .unwrap(),
            "scene: garden, kitchen"
        );
        assert_eq!(
            cap.summarize(&["scene: unknown".into(), "scene: garden, kitchen".into()])
                .unwrap(),
            "scene: garden, kitchen"
        );
        let e = VisionEmbedding::new(Matrix::zeros(1, 1), 0.0, vec![]).unwrap();
        let chunk = Chunk::new(0, vec![e.clone()]).unwrap();
        assert_eq!(cap.caption_chunk(&chunk).unwrap(), "scene: unknown");
        let mut tagged = e;
        tagged.source_tags = vec!["kitchen".into()];
        let chunk = Chunk::new(0, vec![tagged]).unwrap();
        assert_eq!(cap.caption_chunk(&chunk).unwrap(), "scene: kitchen");
    }
}
