use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::TaskType;
use crate::pipeline::AnswerRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub count: usize,
    pub mean_score: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub mean_score: f64,
    pub accuracy: f64,
    pub threshold: u8,
    /// Absent with fewer than two answers.
    pub coherence: Option<f64>,
    pub rpd_mean: f64,
    pub rpd_p95: f64,
    /// Answers carrying an error marker.
    pub errors: usize,
    pub per_task: BTreeMap<TaskType, TaskMetrics>,
}

pub fn rpd(t_input: f64, t_start: f64) -> f64 {
    t_start - t_input
}

pub fn mean_score(scores: &[u8]) -> f64 {
    scores.iter().map(|&s| f64::from(s)).sum::<f64>() / scores.len() as f64
}

/// Fraction of scores at or above `threshold`.
pub fn accuracy(scores: &[u8], threshold: u8) -> f64 {
    scores.iter().filter(|&&s| s >= threshold).count() as f64 / scores.len() as f64
}

/// Mean absolute change between consecutive scores; `None` below two scores.
pub fn coherence(scores: &[u8]) -> Option<f64> {
    if scores.len() < 2 {
        return None;
    }
    let total: f64 = scores
        .windows(2)
        .map(|w| (f64::from(w[0]) - f64::from(w[1])).abs())
        .sum();
    Some(total / (scores.len() - 1) as f64)
}

/// Nearest-rank percentile, `p` in (0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Aggregate judged answers, in turn order. `None` when there are no answers.
pub fn compute_metrics(answers: &[AnswerRecord], threshold: u8) -> Result<Option<MetricsReport>> {
    if answers.is_empty() {
        return Ok(None);
    }
    let scores = answers
        .iter()
        .map(|a| {
            a.judgement
                .map(|j| j.score)
                .ok_or_else(|| Error::invalid(format!("answer {} has not been judged", a.id)))
        })
        .collect::<Result<Vec<u8>>>()?;
    let rpds: Vec<f64> = answers.iter().map(|a| a.rpd).collect();

    let mut grouped: BTreeMap<TaskType, Vec<u8>> = BTreeMap::new();
    for (a, &s) in answers.iter().zip(&scores) {
        if let Some(t) = a.task_type {
            grouped.entry(t).or_default().push(s);
        }
    }
    let per_task = grouped
        .into_iter()
        .map(|(t, s)| {
            (
                t,
                TaskMetrics {
                    count: s.len(),
                    mean_score: mean_score(&s),
                    accuracy: accuracy(&s, threshold),
                },
            )
        })
        .collect();

    Ok(Some(MetricsReport {
        count: answers.len(),
        mean_score: mean_score(&scores),
        accuracy: accuracy(&scores, threshold),
        threshold,
        coherence: coherence(&scores),
        rpd_mean: rpds.iter().sum::<f64>() / rpds.len() as f64,
        rpd_p95: percentile(&rpds, 95.0),
        errors: answers.iter().filter(|a| a.error.is_some()).count(),
        per_task,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ports::Judgement;
    use proptest::prelude::*;

    #[test]
    fn formulas() {
        assert!((coherence(&[5, 3, 5]).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(coherence(&[3, 3, 3]), Some(0.0));
        assert_eq!(coherence(&[4]), None);
        assert!((accuracy(&[5, 4, 2], 3) - 2.0 / 3.0).abs() < 1e-9);
        assert!((rpd(10.0, 10.9) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&v, 100.0), 20.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
    }

    fn answer(id: usize, score: u8, rpd: f64, task: TaskType) -> AnswerRecord {
        AnswerRecord {
            id,
            question: String::new(),
            answer: String::new(),
            t_input: 0.0,
            t_start: rpd,
            t_done: rpd,
            rpd,
            snapshot_version: 0,
            bundle_digest: None,
            best_caption: String::new(),
            path: Vec::new(),
            dialogue_turn: None,
            task_type: Some(task),
            judgement: Some(Judgement {
                verdict: score >= 3,
                score,
            }),
            error: None,
        }
    }

    #[test]
    fn report_fields() {
        let answers = [
            answer(0, 5, 0.5, TaskType::LM),
            answer(1, 3, 1.5, TaskType::CI),
            answer(2, 5, 1.0, TaskType::LM),
        ];
        let m = compute_metrics(&answers, 3).unwrap().unwrap();
        assert_eq!(m.count, 3);
        assert!((m.mean_score - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.coherence, Some(2.0));
        assert!((m.rpd_mean - 1.0).abs() < 1e-12);
        assert_eq!(m.rpd_p95, 1.5);
        assert_eq!(m.per_task[&TaskType::LM].count, 2);
        assert_eq!(m.per_task[&TaskType::CI].mean_score, 3.0);
    }

    #[test]
    fn single_answer_has_no_coherence_and_empty_has_no_report() {
        let m = compute_metrics(&[answer(0, 4, 0.1, TaskType::OS)], 3).unwrap().unwrap();
        assert_eq!(m.coherence, None);
        assert_eq!(compute_metrics(&[], 3).unwrap(), None);
        let mut unjudged = answer(0, 4, 0.1, TaskType::OS);
        unjudged.judgement = None;
        assert!(compute_metrics(&[unjudged], 3).is_err());
    }

    proptest! {
        #[test]
        fn shuffling_keeps_score_and_accuracy(scores in prop::collection::vec(0u8..=5, 1..30), rot in 0usize..30) {
            let mut shuffled = scores.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            prop_assert!((mean_score(&scores) - mean_score(&shuffled)).abs() < 1e-12);
            prop_assert_eq!(accuracy(&scores, 3), accuracy(&shuffled, 3));
        }

        #[test]
        fn coherence_is_bounded(scores in prop::collection::vec(0u8..=5, 2..30)) {
            let c = coherence(&scores).unwrap();
            prop_assert!((0.0..=5.0).contains(&c));
        }
    }

    #[test]
    fn coherence_depends_on_order() {
        assert_eq!(coherence(&[5, 5, 0, 0]), Some(5.0 / 3.0));
        assert_eq!(coherence(&[5, 0, 5, 0]), Some(5.0));
    }
}
