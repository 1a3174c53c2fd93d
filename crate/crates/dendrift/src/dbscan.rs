//! Weighted DBSCAN over low-dimensional points.
//!
//! A point is core when the summed weights of all points within `eps`
//! (itself included) reach `min_weight`. Clusters are connected components
//! of core points plus the border points they reach; everything else is
//! noise (label -1). Scanning is in input order, so a border point reachable
//! from several clusters joins the one discovered first.

use ndarray::ArrayView2;
use std::collections::VecDeque;

/// Cluster label for points that belong to no cluster.
pub const NOISE: isize = -1;

/// Runs weighted DBSCAN on the rows of `points`.
///
/// Returns one label per row: a cluster id starting at 0, or [`NOISE`].
/// Linear-scan neighborhoods; fine for the few hundred micro-clusters the
/// pipeline produces.
pub fn dbscan_weighted(
    points: &ArrayView2<f64>,
    weights: &[f64],
    eps: f64,
    min_weight: f64,
) -> Vec<isize> {
    let n = points.nrows();
    assert_eq!(n, weights.len(), "one weight per point");
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_weight > 0.0, "min_weight must be positive");

    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let eps_sq = eps * eps;
    let mut next_cluster = 0;

    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let seeds = neighborhood(points, start, eps_sq);
        if weight_sum(&seeds, weights) < min_weight {
            continue; // stays noise unless a later cluster claims it as border
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[start] = cluster;

        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != start).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster; // border point, possibly noise earlier
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            labels[j] = cluster;
            let reach = neighborhood(points, j, eps_sq);
            if weight_sum(&reach, weights) >= min_weight {
                queue.extend(reach.into_iter().filter(|&m| !visited[m] || labels[m] == NOISE));
            }
        }
    }
    labels
}

fn neighborhood(points: &ArrayView2<f64>, i: usize, eps_sq: f64) -> Vec<usize> {
    let center = points.row(i);
    (0..points.nrows())
        .filter(|&j| {
            let d: f64 = points
                .row(j)
                .iter()
                .zip(center.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d <= eps_sq
        })
        .collect()
}

fn weight_sum(indices: &[usize], weights: &[f64]) -> f64 {
    indices.iter().map(|&i| weights[i]).sum()
}

/// Number of distinct non-noise clusters in a labeling.
pub fn cluster_count(labels: &[isize]) -> usize {
    let mut seen: Vec<isize> = labels.iter().copied().filter(|&l| l != NOISE).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// True when two labelings are equal up to renaming of cluster ids.
/// Noise must match exactly.
pub fn labels_equivalent(a: &[isize], b: &[isize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut forward = std::collections::HashMap::new();
    let mut backward = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b.iter()) {
        if (x == NOISE) != (y == NOISE) {
            return false;
        }
        if x == NOISE {
            continue;
        }
        if *forward.entry(x).or_insert(y) != y || *backward.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}
