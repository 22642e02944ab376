//! Kmeans over profile feature vectors, WCSS/elbow analysis and the
//! permutation-matched agreement between two clusterings.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{Profile, Taxonomy};
use crate::rng;

/// Concatenated per-category one-hot blocks.
pub fn one_hot(taxonomy: &Taxonomy, profile: &Profile) -> Result<Vec<f64>> {
    taxonomy.validate(profile)?;
    let mut v = vec![0.0; taxonomy.total_classes()];
    let mut offset = 0;
    for (sel, n) in profile.selections.iter().zip(taxonomy.class_counts()) {
        v[offset + sel] = 1.0;
        offset += n;
    }
    Ok(v)
}

/// Concatenated per-category probability blocks (soft decodings).
pub fn soft_features(taxonomy: &Taxonomy, blocks: &[Vec<f64>]) -> Result<Vec<f64>> {
    if blocks.len() != taxonomy.num_categories() {
        return Err(Error::DimensionMismatch {
            expected: taxonomy.num_categories(),
            actual: blocks.len(),
        });
    }
    let mut v = Vec::with_capacity(taxonomy.total_classes());
    for (b, n) in blocks.iter().zip(taxonomy.class_counts()) {
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: b.len() });
        }
        v.extend_from_slice(b);
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after every Lloyd iteration.
    pub wcss_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Within-cluster sum of squared distances.
pub fn wcss(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no points to cluster".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::param(format!("K = {k} must be in 1..={}", points.len())));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: p.len() });
    }
    Ok(dim)
}

fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[idx].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    (sums, counts)
}

/// Lloyd iterations from a kmeans++ start.
///
/// Stops once no centroid moves more than `tol` (Euclidean) or after
/// `max_iters` iterations. An empty cluster takes over the point farthest
/// from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<ClusteringResult> {
    let dim = check_points(points, k)?;
    let mut r = rng::substream(seed, &[rng::tag_str("kmeans++"), k as u64]);
    let mut centroids = kmeans_pp(points, k, &mut r);
    let mut assignments = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            assignments[i] = j;
            dists[i] = d;
        }
        let mut counts = vec![0usize; k];
        assignments.iter().for_each(|&a| counts[a] += 1);
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            // donor must keep at least one point
            let far = (0..points.len())
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                assignments[i] = j;
                counts[j] = 1;
                dists[i] = 0.0;
            }
        }
        let (new_centroids, _) = means(points, &assignments, k, dim);
        let movement = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = new_centroids;
        history.push(wcss(points, &centroids, &assignments));
        if movement < tol || iterations >= max_iters.max(1) {
            break;
        }
    }
    Ok(ClusteringResult {
        k,
        wcss: *history.last().expect("at least one iteration"),
        centroids,
        assignments,
        iterations,
        wcss_history: history,
    })
}

/// Runs [`kmeans`] from `restarts` seeds and keeps the lowest-WCSS result.
pub fn kmeans_best_of(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    restarts: usize,
) -> Result<ClusteringResult> {
    let mut best: Option<ClusteringResult> = None;
    for run in 0..restarts.max(1) {
        let res = kmeans(points, k, rng::derive_seed(seed, &[run as u64]), max_iters, tol)?;
        if best.as_ref().is_none_or(|b| res.wcss < b.wcss) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one run"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        KmeansOptions {
            max_iters: 300,
            tol: 1e-6,
            restarts: 10,
        }
    }
}

/// WCSS for every K in `k_min..=k_max`.
pub fn elbow_scan(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    opts: &KmeansOptions,
) -> Result<Vec<(usize, f64)>> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::EmptyInput(format!("empty K range {k_min}..={k_max}")));
    }
    if k_max > points.len() {
        return Err(Error::param(format!("K = {k_max} exceeds {} points", points.len())));
    }
    (k_min..=k_max)
        .map(|k| {
            kmeans_best_of(points, k, seed, opts.max_iters, opts.tol, opts.restarts).map(|r| (k, r.wcss))
        })
        .collect()
}

/// The K with the largest second difference of WCSS (the sharpest bend).
pub fn elbow_point(scan: &[(usize, f64)]) -> Option<usize> {
    scan.windows(3)
        .map(|w| (w[1].0, w[0].1 - 2.0 * w[1].1 + w[2].1))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

fn contingency(reference: &[usize], test: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if reference.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: test.len(),
        });
    }
    let mut table = vec![vec![0usize; k]; k];
    for (&r, &t) in reference.iter().zip(test) {
        if r >= k || t >= k {
            return Err(Error::param(format!("cluster id out of range for K = {k}")));
        }
        table[t][r] += 1;
    }
    Ok(table)
}

fn best_permutation_brute(table: &[Vec<usize>]) -> usize {
    fn go(table: &[Vec<usize>], row: usize, used: &mut [bool], acc: usize, best: &mut usize) {
        if row == table.len() {
            *best = (*best).max(acc);
            return;
        }
        for c in 0..table.len() {
            if !used[c] {
                used[c] = true;
                go(table, row + 1, used, acc + table[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = 0;
    go(table, 0, &mut vec![false; table.len()], 0, &mut best);
    best
}

/// Maximum-weight perfect matching on a square table (Hungarian method).
fn best_permutation_hungarian(table: &[Vec<usize>]) -> usize {
    let n = table.len();
    let max = table.iter().flatten().copied().max().unwrap_or(0) as i64;
    // minimize cost = max - weight; 1-indexed potentials
    let cost = |i: usize, j: usize| max - table[i - 1][j - 1] as i64;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| table[p[j] - 1][j - 1]).sum()
}

/// Fraction of points on which two clusterings agree under the best
/// relabeling of `test`'s cluster ids.
pub fn matched_accuracy(reference: &[usize], test: &[usize], k: usize) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyInput("no assignments".into()));
    }
    let table = contingency(reference, test, k)?;
    let matched = if k <= 8 {
        best_permutation_brute(&table)
    } else {
        best_permutation_hungarian(&table)
    };
    Ok(matched as f64 / reference.len() as f64)
}

/// Agreement between the clustering of clean profiles and the clustering of
/// their decoded counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityOutcome {
    pub matched_accuracy: f64,
    pub clean: ClusteringResult,
    pub decoded: ClusteringResult,
}

/// Clusters clean one-hot features and decoded features (one-hot of decoded
/// profiles, or any other per-profile vectors) and matches the assignments.
pub fn clustering_utility(
    clean_features: &[Vec<f64>],
    decoded_features: &[Vec<f64>],
    k: usize,
    seed: u64,
    opts: &KmeansOptions,
) -> Result<UtilityOutcome> {
    if clean_features.len() != decoded_features.len() {
        return Err(Error::DimensionMismatch {
            expected: clean_features.len(),
            actual: decoded_features.len(),
        });
    }
    let clean = kmeans_best_of(clean_features, k, seed, opts.max_iters, opts.tol, opts.restarts)?;
    let decoded = kmeans_best_of(decoded_features, k, seed, opts.max_iters, opts.tol, opts.restarts)?;
    Ok(UtilityOutcome {
        matched_accuracy: matched_accuracy(&clean.assignments, &decoded.assignments, k)?,
        clean,
        decoded,
    })
}

impl ClusteringResult {
    /// Summary header then `index,assignment` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("K,wcss,iterations\n");
        writeln!(s, "{},{:?},{}", self.k, self.wcss, self.iterations).unwrap();
        s.push_str("index,assignment\n");
        for (i, a) in self.assignments.iter().enumerate() {
            writeln!(s, "{i},{a}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::substream(seed, &[]);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in [[0.0, 0.0], [10.0, 10.0]].iter().enumerate() {
            for _ in 0..50 {
                pts.push(vec![center[0] + r.gen_range(-1.0..1.0), center[1] + r.gen_range(-1.0..1.0)]);
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn separates_two_clouds() {
        let (pts, truth) = blobs(1);
        let res = kmeans(&pts, 2, 3, 100, 1e-9).unwrap();
        assert_eq!(matched_accuracy(&truth, &res.assignments, 2).unwrap(), 1.0);
        for w in res.wcss_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let recomputed = wcss(&pts, &res.centroids, &res.assignments);
        assert!((recomputed - res.wcss).abs() <= 1e-9 * recomputed.max(1.0));
    }

    #[test]
    fn k_equal_to_points_has_zero_wcss() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let res = kmeans(&pts, 6, 0, 50, 1e-9).unwrap();
        assert_eq!(res.wcss, 0.0);
        assert_eq!(elbow_scan(&pts, 6, 6, 0, &KmeansOptions::default()).unwrap(), vec![(6, 0.0)]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0, 0.0], vec![5.0, 7.0], vec![-1.0, 3.0]];
        let res = kmeans(&pts, 1, 4, 10, 1e-12).unwrap();
        let mean = [2.0, 3.0];
        for (c, m) in res.centroids[0].iter().zip(mean) {
            assert!((c - m).abs() < 1e-9);
        }
        // total variance times count
        let oracle: f64 = pts.iter().map(|p| (p[0] - 2.0).powi(2) + (p[1] - 3.0).powi(2)).sum();
        assert!((res.wcss - oracle).abs() < 1e-9);
    }

    #[test]
    fn kmeans_errors() {
        assert!(kmeans(&[], 1, 0, 10, 1e-6).is_err());
        assert!(kmeans(&[vec![1.0]], 2, 0, 10, 1e-6).is_err());
        assert!(kmeans(&[vec![1.0], vec![1.0, 2.0]], 1, 0, 10, 1e-6).is_err());
        assert!(elbow_scan(&[vec![1.0]], 2, 1, 0, &KmeansOptions::default()).is_err());
    }

    #[test]
    fn matched_accuracy_examples() {
        assert_eq!(matched_accuracy(&[0, 0, 1, 1], &[1, 1, 1, 0], 2).unwrap(), 0.75);
        let reference = [0, 1, 2, 2, 1, 0];
        assert_eq!(matched_accuracy(&reference, &reference, 3).unwrap(), 1.0);
        let permuted: Vec<usize> = reference.iter().map(|&r| (r + 1) % 3).collect();
        assert_eq!(matched_accuracy(&reference, &permuted, 3).unwrap(), 1.0);
        assert!(matched_accuracy(&[0, 1], &[0], 2).is_err());
        assert!(matched_accuracy(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn hungarian_agrees_with_brute_force() {
        let mut r = rng::substream(12, &[]);
        for _ in 0..200 {
            let k = r.gen_range(1..=7);
            let table: Vec<Vec<usize>> = (0..k).map(|_| (0..k).map(|_| r.gen_range(0..20)).collect()).collect();
            assert_eq!(best_permutation_brute(&table), best_permutation_hungarian(&table));
        }
    }

    #[test]
    fn large_k_uses_assignment_solver() {
        let reference: Vec<usize> = (0..200).map(|i| i % 10).collect();
        let test: Vec<usize> = reference.iter().map(|&r| (r * 3 + 1) % 10).collect();
        assert_eq!(matched_accuracy(&reference, &test, 10).unwrap(), 1.0);
    }

    #[test]
    fn one_hot_blocks() {
        let tax = crate::profile::builtin_taxonomy(crate::profile::BuiltinTaxonomy::Flight);
        let v = one_hot(&tax, &Profile::new(vec![10, 2])).unwrap();
        assert_eq!(v.len(), 14);
        assert_eq!(v.iter().sum::<f64>(), 2.0);
        assert_eq!((v[10], v[13]), (1.0, 1.0));
        assert!(one_hot(&tax, &Profile::new(vec![11, 0])).is_err());
    }

    #[test]
    fn csv_export() {
        let pts = vec![vec![0.0], vec![0.1], vec![5.0]];
        let res = kmeans(&pts, 2, 1, 10, 1e-9).unwrap();
        let csv = res.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "K,wcss,iterations");
        assert!(lines[1].starts_with("2,"));
        assert_eq!(lines[2], "index,assignment");
        assert_eq!(lines.len(), 6);
    }

    proptest! {
        #[test]
        fn relabeling_invariance(
            reference in proptest::collection::vec(0usize..4, 1..40),
            shift_a in 0usize..4,
            shift_b in 0usize..4,
            test_seed: u64,
        ) {
            let mut r = rng::substream(test_seed, &[]);
            let test: Vec<usize> = reference.iter().map(|_| r.gen_range(0..4)).collect();
            let base = matched_accuracy(&reference, &test, 4).unwrap();
            let ra: Vec<usize> = reference.iter().map(|x| (x + shift_a) % 4).collect();
            let tb: Vec<usize> = test.iter().map(|x| (x * 3 + shift_b) % 4).collect();
            prop_assert!((matched_accuracy(&ra, &tb, 4).unwrap() - base).abs() < 1e-12);
        }
    }
}
