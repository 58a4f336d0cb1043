//! Weighted z-scoring and k-means++ / Lloyd clustering.

use rand::Rng;
use rayon::prelude::*;

/// Per-dimension weighted z-scores. Dimensions with zero variance map to 0.
pub fn standardize(points: &[Vec<f64>], weights: &[f64]) -> Vec<Vec<f64>> {
    let Some(d) = points.first().map(Vec::len) else {
        return Vec::new();
    };
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; d];
    for (p, &w) in points.iter().zip(weights) {
        for j in 0..d {
            mean[j] += w * p[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; d];
    for (p, &w) in points.iter().zip(weights) {
        for j in 0..d {
            var[j] += w * (p[j] - mean[j]).powi(2);
        }
    }
    let sd: Vec<f64> = var.iter().map(|v| (v / total).sqrt()).collect();
    points
        .iter()
        .map(|p| {
            (0..d)
                .map(|j| {
                    if sd[j] > 1e-12 {
                        (p[j] - mean[j]) / sd[j]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, ties to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Weighted k-means with k-means++ seeding. Points must be distinct and
/// `1 <= k <= points.len()`; each cluster ends non-empty.
pub fn kmeans<R: Rng>(
    points: &[Vec<f64>],
    weights: &[f64],
    k: usize,
    max_iter: usize,
    rng: &mut R,
) -> KMeans {
    let n = points.len();
    assert!(k >= 1 && k <= n, "k must be in 1..={n}");
    let mut centroids = seed_plus_plus(points, weights, k, rng);
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let next: Vec<usize> = points
            .par_iter()
            .map(|p| nearest(p, &centroids).0)
            .collect();
        let changed = next != assignment;
        assignment = next;
        relocate_empty(points, &mut assignment, &centroids, k);
        if !changed {
            break;
        }
        centroids = means(points, weights, &assignment, k);
    }
    KMeans {
        assignment,
        centroids,
        iterations,
    }
}

fn seed_plus_plus<R: Rng>(
    points: &[Vec<f64>],
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let pick = |scores: &[f64], rng: &mut R| -> usize {
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            return scores.iter().position(|&s| s > 0.0).unwrap_or(0);
        }
        let mut r = rng.gen::<f64>() * total;
        for (i, &s) in scores.iter().enumerate() {
            if r < s {
                return i;
            }
            r -= s;
        }
        scores.iter().rposition(|&s| s > 0.0).unwrap_or(0)
    };
    let first = pick(weights, rng);
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let next = pick(&scores, rng);
        let c = points[next].clone();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn means(points: &[Vec<f64>], weights: &[f64], assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut mass = vec![0.0; k];
    for ((p, &w), &a) in points.iter().zip(weights).zip(assignment) {
        mass[a] += w;
        for j in 0..d {
            sums[a][j] += w * p[j];
        }
    }
    for (s, m) in sums.iter_mut().zip(mass) {
        s.iter_mut().for_each(|x| *x /= m);
    }
    sums
}

/// Moves the farthest point of some multi-point cluster into each empty one.
fn relocate_empty(points: &[Vec<f64>], assignment: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|&a| sizes[a] += 1);
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let far = (0..points.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(&points[a], &centroids[assignment[a]]);
                let db = sq_dist(&points[b], &centroids[assignment[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= number of points");
        sizes[assignment[far]] -= 1;
        assignment[far] = c;
        sizes[c] = 1;
    }
}
