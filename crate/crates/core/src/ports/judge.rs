use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ports::stubs::tokenize;
use crate::ports::Judge;

/// Judge output: yes/no verdict plus an integer score in `0..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    #[serde(with = "yes_no")]
    pub verdict: bool,
    pub score: u8,
}

mod yes_no {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *v { "yes" } else { "no" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.to_ascii_lowercase().as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            other => Err(D::Error::custom(format!("verdict must be yes or no, got `{other}`"))),
        }
    }
}

/// Token-set F1 between reference and prediction, scored as `round(5 * F1)`
/// with ties to even. Verdict is yes iff score >= 3.
pub fn exact_match_judge(_question: &str, reference: &str, prediction: &str) -> Judgement {
    let r: BTreeSet<String> = tokenize(reference).collect();
    let p: BTreeSet<String> = tokenize(prediction).collect();
    let score = if r.is_empty() && p.is_empty() {
        5
    } else {
        // 5 * F1 = 10 |r ∩ p| / (|r| + |p|), rounded exactly in integers
        let common = r.intersection(&p).count() as u64;
        round_half_even(10 * common, (r.len() + p.len()) as u64) as u8
    };
    Judgement {
        verdict: score >= 3,
        score,
    }
}

fn round_half_even(num: u64, den: u64) -> u64 {
    let (q, rem) = (num / den, num % den);
    match (2 * rem).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExactMatchJudge;

impl Judge for ExactMatchJudge {
    fn judge(&self, question: &str, reference: &str, prediction: &str) -> Result<Judgement> {
        Ok(exact_match_judge(question, reference, prediction))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_full_score() {
        let j = exact_match_judge("q", "a red cup", "a red cup");
        assert_eq!(
            j,
            Judgement {
                verdict: true,
                score: 5
            }
        );
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(
            exact_match_judge("q", "red cup", "blue door"),
            Judgement {
                verdict: false,
                score: 0
            }
        );
    }

    #[test]
    fn half_f1_rounds_to_even() {
        // |r|=2, |p|=2, one shared: F1 = 0.5, 5 * 0.5 = 2.5 -> 2
        assert_eq!(
            exact_match_judge("q", "red cup", "red door"),
            Judgement {
                verdict: false,
                score: 2
            }
        );
        // |r|=1, |p|=3, one shared: F1 = 0.5 as well
        assert_eq!(exact_match_judge("q", "kitchen", "scene: garden, kitchen").score, 2);
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(round_half_even(25, 10), 2);
        assert_eq!(round_half_even(35, 10), 4);
        assert_eq!(round_half_even(26, 10), 3);
        assert_eq!(round_half_even(24, 10), 2);
    }

    #[test]
    fn verdict_serializes_as_yes_no() {
        let j = Judgement {
            verdict: true,
            score: 4,
        };
        assert_eq!(serde_json::to_string(&j).unwrap(), r#"{"verdict":"yes","score":4}"#);
        let back: Judgement = serde_json::from_str(r#"{"verdict":"no","score":1}"#).unwrap();
        assert_eq!(
            back,
            Judgement {
                verdict: false,
                score: 1
            }
        );
        assert!(serde_json::from_str::<Judgement>(r#"{"verdict":"maybe","score":1}"#).is_err());
    }
}
