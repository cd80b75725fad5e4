//! Short-term memory: a handful of recent embeddings sampled under an
//! exponential forgetting curve.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_gate::VisionEmbedding;
use crate::memory::MemoryConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShortTermMemory {
    pub units: Vec<VisionEmbedding>,
    pub last_refresh_timestamp: f64,
}

impl ShortTermMemory {
    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Normalized forgetting probabilities for ages `0..n` (newest first):
/// `exp(-k / scale)` divided by their sum.
pub fn forgetting_weights(n: usize, scale: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("forgetting_weights needs n >= 1"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid("forgetting scale must be a positive finite number"));
    }
    let raw: Vec<f64> = (0..n).map(|k| (-(k as f64) / scale).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Rebuild short-term memory from the candidate pool.
///
/// `recent` is ordered oldest to newest; only its last `candidate_len` entries
/// are candidates. Draws `min(short_len, candidates)` units without
/// replacement, each draw proportional to the remaining forgetting weights,
/// and returns them in chronological order.
pub fn refresh_short_term<R: Rng + ?Sized>(
    recent: &[VisionEmbedding],
    cfg: &MemoryConfig,
    rng: &mut R,
    now: f64,
) -> Result<ShortTermMemory> {
    let pool = &recent[recent.len().saturating_sub(cfg.candidate_len)..];
    if pool.is_empty() {
        return Ok(ShortTermMemory {
            units: Vec::new(),
            last_refresh_timestamp: now,
        });
    }
    // weights[k] belongs to age k, i.e. pool[pool.len() - 1 - k]
    let mut weights = forgetting_weights(pool.len(), cfg.forgetting_scale)?;
    let take = cfg.short_len.min(pool.len());
    let mut picked_ages = Vec::with_capacity(take);
    for _ in 0..take {
        let total: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut choice = None;
        for (age, w) in weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            choice = Some(age);
            if target < *w {
                break;
            }
            target -= w;
        }
        let age = choice.expect("at least one candidate remains");
        weights[age] = 0.0;
        picked_ages.push(age);
    }
    // larger age = older
    picked_ages.sort_unstable_by(|a, b| b.cmp(a));
    let units = picked_ages
        .into_iter()
        .map(|age| pool[pool.len() - 1 - age].clone())
        .collect();
    Ok(ShortTermMemory {
        units,
        last_refresh_timestamp: now,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn embs(n: usize) -> Vec<VisionEmbedding> {
        (0..n)
            .map(|i| VisionEmbedding::new(Matrix::zeros(1, 2), i as f64, vec![]).unwrap())
            .collect()
    }

    fn cfg(short_len: usize, candidate_len: usize, scale: f64) -> MemoryConfig {
        MemoryConfig {
            short_len,
            candidate_len,
            forgetting_scale: scale,
            ..MemoryConfig::default()
        }
    }

    #[test]
    fn single_weight_is_one() {
        assert_eq!(forgetting_weights(1, 2.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn three_weights_unit_scale() {
        // exp(-k) / (1 + e^-1 + e^-2) computed independently
        let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        let expected = [1.0 / z, (-1.0f64).exp() / z, (-2.0f64).exp() / z];
        let w = forgetting_weights(3, 1.0).unwrap();
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in w.iter().zip([0.66524, 0.24473, 0.09003]) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_candidates_is_error() {
        assert!(forgetting_weights(0, 1.0).is_err());
        assert!(forgetting_weights(3, 0.0).is_err());
    }

    #[test]
    fn sample_larger_than_population_returns_all() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let st = refresh_short_term(&embs(3), &cfg(5, 20, 1.0), &mut rng, 9.0).unwrap();
        let ts: Vec<f64> = st.units.iter().map(|u| u.source_timestamp).collect();
        assert_eq!(ts, vec![0.0, 1.0, 2.0]);
        assert_eq!(st.last_refresh_timestamp, 9.0);
    }

    #[test]
    fn default_sizes_give_five_from_twenty() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let st = refresh_short_term(&embs(40), &cfg(5, 20, 5.0), &mut rng, 0.0).unwrap();
        assert_eq!(st.units.len(), 5);
        assert!(st.units.iter().all(|u| u.source_timestamp >= 20.0));
        assert!(st
            .units
            .windows(2)
            .all(|w| w[0].source_timestamp < w[1].source_timestamp));
    }

    #[test]
    fn empty_input_gives_empty_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = refresh_short_term(&[], &cfg(5, 20, 1.0), &mut rng, 0.0).unwrap();
        assert!(st.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let pool = embs(20);
        let a = refresh_short_term(&pool, &cfg(5, 20, 3.0), &mut ChaCha8Rng::seed_from_u64(7), 0.0).unwrap();
        let b = refresh_short_term(&pool, &cfg(5, 20, 3.0), &mut ChaCha8Rng::seed_from_u64(7), 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_matches_weights() {
        let pool = embs(3);
        let c = cfg(1, 20, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 3];
        let trials = 100_000;
        for _ in 0..trials {
            let st = refresh_short_term(&pool, &c, &mut rng, 0.0).unwrap();
            let age = 2 - st.units[0].source_timestamp as usize;
            counts[age] += 1;
        }
        for (count, expected) in counts.iter().zip([0.665, 0.245, 0.090]) {
            let freq = *count as f64 / trials as f64;
            assert!((freq - expected).abs() <= 0.01, "{freq} vs {expected}");
        }
    }

    proptest::proptest! {
        #[test]
        fn weights_normalized_and_decreasing(n in 1usize..60, scale in 0.05f64..50.0) {
            let w = forgetting_weights(n, scale).unwrap();
            let sum: f64 = w.iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-12);
            proptest::prop_assert!(w.windows(2).all(|p| p[0] > p[1]));
        }

        #[test]
        fn never_older_than_candidate_window(len in 1usize..80, n in 1usize..25, s in 1usize..8, seed: u64) {
            let s = s.min(n);
            let pool = embs(len);
            let st = refresh_short_term(&pool, &cfg(s, n, 2.0), &mut ChaCha8Rng::seed_from_u64(seed), 0.0).unwrap();
            let oldest_allowed = len.saturating_sub(n) as f64;
            proptest::prop_assert_eq!(st.units.len(), s.min(len));
            proptest::prop_assert!(st.units.iter().all(|u| u.source_timestamp >= oldest_allowed));
        }
    }
}
