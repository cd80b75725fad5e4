//! Seeded Lloyd's k-means with k-means++ initialization.
//!
//! Rows are put into a canonical (lexicographic) order before seeding, so the
//! result depends only on the multiset of points and the seed, never on the
//! order rows were supplied in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::matrix::{squared_distance, Matrix};

pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    /// `k' x d` with `k' = min(k, distinct points)`.
    pub centroids: Matrix,
    /// Cluster label per input row, in the caller's row order.
    pub assignment: Vec<usize>,
    /// Sum of squared distances of points to their assigned centroid.
    pub objective: f64,
    /// Objective after every assignment step of the returned run.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Point-centroid distance evaluations times dimension, summed over all restarts.
    pub work: u64,
}

/// Lloyd iterations from [`DEFAULT_RESTARTS`] seeded k-means++ starts; the best run wins.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    kmeans_restarts(points, k, seed, max_iter, DEFAULT_RESTARTS)
}

/// Best of `restarts` independently seeded runs (ties keep the earliest run).
pub fn kmeans_restarts(points: &Matrix, k: usize, seed: u64, max_iter: usize, restarts: usize) -> Result<KMeansResult> {
    if points.rows() == 0 || points.cols() == 0 {
        return Err(Error::invalid("k-means needs at least one point with d >= 1"));
    }
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("k-means input"));
    }

    let mut order: Vec<usize> = (0..points.rows()).collect();
    order.sort_by(|&a, &b| cmp_rows(points.row(a), points.row(b)).then(a.cmp(&b)));
    let mut sorted = Matrix::zeros(points.rows(), points.cols());
    for (dst, &src) in order.iter().enumerate() {
        sorted.row_mut(dst).copy_from_slice(points.row(src));
    }
    let distinct = 1
        + (1..sorted.rows())
            .filter(|&i| sorted.row(i) != sorted.row(i - 1))
            .count();
    let k = k.min(distinct);

    let mut best: Option<Run> = None;
    let mut work = 0u64;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        let run = lloyd(&sorted, init_plus_plus(&sorted, k, &mut rng), max_iter);
        work += run.work;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one run");

    let mut assignment = vec![0; points.rows()];
    for (sorted_idx, &src) in order.iter().enumerate() {
        assignment[src] = best.assignment[sorted_idx];
    }
    Ok(KMeansResult {
        centroids: best.centroids,
        assignment,
        objective: best.objective,
        history: best.history,
        iterations: best.iterations,
        work,
    })
}

fn cmp_rows(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

struct Run {
    centroids: Matrix,
    assignment: Vec<usize>,
    objective: f64,
    history: Vec<f64>,
    iterations: usize,
    work: u64,
}

/// Greedy k-means++: each new center is the best of `2 + ln k` D²-sampled
/// candidates by resulting potential.
fn init_plus_plus(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let m = points.rows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.random_range(0..m);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = points
        .iter_rows()
        .map(|p| squared_distance(p, points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = sample_d2(&nearest, rng.random::<f64>() * total);
            let updated: Vec<f64> = nearest
                .iter()
                .enumerate()
                .map(|(i, d)| d.min(squared_distance(points.row(i), points.row(pick))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, pick, updated));
            }
        }
        let (_, pick, updated) = best.expect("at least one trial");
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        nearest = updated;
    }
    centroids
}

/// Index whose cumulative D² mass first exceeds `target`. Points already
/// covered are never returned; k never exceeds the distinct count, so one exists.
fn sample_d2(nearest: &[f64], mut target: f64) -> usize {
    let mut pick = None;
    for (i, d) in nearest.iter().enumerate() {
        if *d <= 0.0 {
            continue;
        }
        pick = Some(i);
        if target < *d {
            break;
        }
        target -= d;
    }
    pick.expect("an uncovered point exists")
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (i, p) in points.iter_rows().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (j, c) in centroids.iter_rows().enumerate() {
            let d = squared_distance(p, c);
            if d < best.0 {
                best = (d, j);
            }
        }
        labels[i] = best.1;
        objective += best.0;
    }
    objective
}

fn update(points: &Matrix, labels: &[usize], centroids: &mut Matrix) {
    let (k, d) = centroids.shape();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut reseeded = Vec::new();
    for j in 0..k {
        if counts[j] > 0 {
            let n = counts[j] as f64;
            for (c, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                *c = s / n;
            }
        }
    }
    // Empty clusters take the point farthest from its assigned centroid.
    for j in (0..k).filter(|&j| counts[j] == 0) {
        let mut far = (0.0, None);
        for (i, p) in points.iter_rows().enumerate() {
            if reseeded.contains(&i) {
                continue;
            }
            let dist = squared_distance(p, centroids.row(labels[i]));
            if dist > far.0 {
                far = (dist, Some(i));
            }
        }
        if let Some(i) = far.1 {
            reseeded.push(i);
            let row = points.row(i).to_vec();
            centroids.row_mut(j).copy_from_slice(&row);
        }
    }
}

fn lloyd(points: &Matrix, mut centroids: Matrix, max_iter: usize) -> Run {
    let step_work = (points.rows() * centroids.rows() * points.cols()) as u64;
    let mut labels = vec![0; points.rows()];
    let mut objective = assign(points, &centroids, &mut labels);
    let mut history = vec![objective];
    let mut work = step_work;
    let mut iterations = 0;
    let mut next = labels.clone();
    while iterations < max_iter {
        iterations += 1;
        update(points, &labels, &mut centroids);
        objective = assign(points, &centroids, &mut next);
        work += step_work;
        history.push(objective);
        if next == labels {
            break;
        }
        std::mem::swap(&mut labels, &mut next);
    }
    Run {
        centroids,
        assignment: labels,
        objective,
        history,
        iterations,
        work,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::Rng;

    /// Exhaustive minimum over all partitions of the points into at most `k` blocks.
    pub(crate) fn brute_force_objective(points: &Matrix, k: usize) -> f64 {
        fn cost(points: &Matrix, labels: &[usize], blocks: usize) -> f64 {
            let d = points.cols();
            let mut sums = vec![vec![0.0; d]; blocks];
            let mut counts = vec![0usize; blocks];
            for (p, &l) in points.iter_rows().zip(labels) {
                counts[l] += 1;
                for (s, v) in sums[l].iter_mut().zip(p) {
                    *s += v;
                }
            }
            points
                .iter_rows()
                .zip(labels)
                .map(|(p, &l)| {
                    let n = counts[l] as f64;
                    p.iter().zip(&sums[l]).map(|(v, s)| (v - s / n).powi(2)).sum::<f64>()
                })
                .sum()
        }
        // restricted growth strings enumerate each set partition once
        fn rec(points: &Matrix, k: usize, labels: &mut Vec<usize>, used: usize, best: &mut f64) {
            if labels.len() == points.rows() {
                *best = best.min(cost(points, labels, used));
                return;
            }
            for l in 0..(used + 1).min(k) {
                labels.push(l);
                rec(points, k, labels, used.max(l + 1), best);
                labels.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(points, k, &mut Vec::new(), 0, &mut best);
        best
    }

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn sorted_rows(mat: &Matrix) -> Vec<Vec<f64>> {
        let mut rows = mat.to_rows();
        rows.sort_by(|a, b| cmp_rows(a, b));
        rows
    }

    #[test]
    fn k_equals_m_recovers_points() {
        let pts = m(&[&[0.0, 1.0], &[5.0, 2.0], &[-3.0, 4.0]]);
        let r = kmeans(&pts, 3, 9, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(sorted_rows(&r.centroids), sorted_rows(&pts));
    }

    #[test]
    fn two_pairs() {
        let pts = m(&[&[0.0, 0.0], &[0.0, 1.0], &[10.0, 10.0], &[10.0, 11.0]]);
        assert!((brute_force_objective(&pts, 2) - 1.0).abs() < 1e-12);
        let r = kmeans(&pts, 2, 1, DEFAULT_MAX_ITER).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert_eq!(sorted_rows(&r.centroids), vec![vec![0.0, 0.5], vec![10.0, 10.5]]);
        assert_eq!(r.assignment[0], r.assignment[1]);
        assert_eq!(r.assignment[2], r.assignment[3]);
        assert_ne!(r.assignment[0], r.assignment[2]);
    }

    #[test]
    fn duplicates_collapse_to_one_centroid() {
        let row: &[f64] = &[3.0, 3.0];
        let pts = m(&[row; 5]);
        let r = kmeans(&pts, 2, 0, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.centroids.shape(), (1, 2));
        assert_eq!(r.centroids.row(0), &[3.0, 3.0]);
        assert_eq!(r.assignment, vec![0; 5]);
    }

    #[test]
    fn single_point() {
        let pts = m(&[&[1.5, -2.0, 0.25]]);
        let r = kmeans(&pts, 5, 3, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.centroids, pts);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            kmeans(&m(&[&[f64::NAN, 0.0]]), 1, 0, 10),
            Err(Error::NonFinite(_))
        ));
        assert!(kmeans(&m(&[&[1.0]]), 0, 0, 10).is_err());
        assert!(kmeans(&Matrix::zeros(0, 2), 1, 0, 10).is_err());
    }

    #[test]
    fn matches_exhaustive_optimum_on_most_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut hits = 0;
        let trials = 200;
        for t in 0..trials {
            let rows = rng.random_range(1..=12);
            let k = rng.random_range(1..=3);
            let pts = Matrix::from_vec(rows, 2, (0..rows * 2).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let r = kmeans(&pts, k, t, DEFAULT_MAX_ITER).unwrap();
            let opt = brute_force_objective(&pts, k);
            assert!(r.objective >= opt - 1e-9);
            if (r.objective - opt).abs() <= 1e-9 {
                hits += 1;
            }
            assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        }
        assert!(hits * 10 >= trials * 9, "{hits}/{trials}");
    }

    proptest::proptest! {
        #[test]
        fn permutation_invariant(
            raw in proptest::collection::vec((-10i32..10, -10i32..10), 1..16),
            k in 1usize..5,
            seed: u64,
            rot in 0usize..16,
        ) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|(a, b)| vec![*a as f64, *b as f64]).collect();
            let mut permuted = rows.clone();
            let len = permuted.len();
            permuted.rotate_left(rot % len);
            permuted.reverse();
            let a = kmeans(&Matrix::from_rows(&rows).unwrap(), k, seed, 50).unwrap();
            let b = kmeans(&Matrix::from_rows(&permuted).unwrap(), k, seed, 50).unwrap();
            proptest::prop_assert_eq!(&a.centroids, &b.centroids);
            proptest::prop_assert_eq!(a.objective, b.objective);
            // same point, same label
            for (i, row) in rows.iter().enumerate() {
                let j = permuted.iter().position(|r| r == row).unwrap();
                proptest::prop_assert_eq!(
                    a.centroids.row(a.assignment[i]),
                    b.centroids.row(b.assignment[j])
                );
            }
        }

        #[test]
        fn objective_never_increases(
            raw in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 1..40),
            k in 1usize..7,
            seed: u64,
        ) {
            let pts = Matrix::from_rows(&raw).unwrap();
            let r = kmeans_restarts(&pts, k, seed, 50, 3).unwrap();
            proptest::prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            proptest::prop_assert!(r.centroids.rows() <= k);
            proptest::prop_assert_eq!(r.assignment.len(), pts.rows());
        }
    }
}
