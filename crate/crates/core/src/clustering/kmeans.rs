use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SclError};
use crate::tensor::Matrix;

use super::{ClusterResult, Method};

#[derive(Debug, Clone, Copy)]
pub struct KMeansOptions {
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            n_init: 10,
            max_iter: 300,
            tol: 1e-8,
        }
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding, best of `n_init` seeded
/// restarts by inertia. Restart r draws from seed + r, and ties between
/// restarts keep the earlier one, so results are reproducible.
pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<ClusterResult> {
    kmeans_with(x, k, seed, KMeansOptions::default())
}

pub fn kmeans_with(x: &Matrix, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterResult> {
    let n = x.rows();
    if k < 1 {
        return Err(SclError::contract("k-means requires k >= 1"));
    }
    if k > n {
        return Err(SclError::contract(format!(
            "k-means requires k <= n, got k = {k} with n = {n}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..opts.n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        let (labels, inertia) = lloyd(x, k, &mut rng, &opts);
        let better = match &best {
            None => true,
            Some((best_inertia, _)) => inertia < *best_inertia,
        };
        if better {
            best = Some((inertia, labels));
        }
    }
    let (inertia, labels) = best.expect("at least one restart");
    let (labels, k_used) = compact_labels(labels);
    Ok(ClusterResult {
        labels,
        k: k_used,
        method: Method::KMeans,
        inertia: Some(inertia),
        eigenvalues: None,
    })
}

/// Relabel so cluster ids are consecutive from 0 and every id is used;
/// ids keep their relative order.
fn compact_labels(labels: Vec<usize>) -> (Vec<usize>, usize) {
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut used = vec![false; max_label + 1];
    for &l in &labels {
        used[l] = true;
    }
    let mut remap = vec![usize::MAX; max_label + 1];
    let mut next = 0;
    for (old, &u) in used.iter().enumerate() {
        if u {
            remap[old] = next;
            next += 1;
        }
    }
    (labels.into_iter().map(|l| remap[l]).collect(), next)
}

fn lloyd(x: &Matrix, k: usize, rng: &mut ChaCha8Rng, opts: &KMeansOptions) -> (Vec<usize>, f64) {
    let n = x.rows();
    let d = x.cols();
    let mut centroids = plus_plus_init(x, k, rng);
    let mut labels = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;

    for _iter in 0..opts.max_iter.max(1) {
        // assignment
        let mut inertia = 0.0;
        for i in 0..n {
            let row = x.row(i);
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let dist = dist_sq(row, centroid);
                if dist < best_d {
                    best_d = dist;
                    best_c = c;
                }
            }
            labels[i] = best_c;
            inertia += best_d;
        }
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-9) + 1e-12,
            "inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;

        // update
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; d]; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, &v) in sums[l].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        let mut reseed_taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                let new: Vec<f64> = sums[c].iter().map(|s| s * inv).collect();
                shift = shift.max(dist_sq(&new, &centroids[c]).sqrt());
                centroids[c] = new;
            } else {
                // empty cluster: reseed to the point farthest from its
                // own centroid (deterministic: first index on ties)
                let mut far_i = 0;
                let mut far_d = -1.0;
                for i in 0..n {
                    if reseed_taken.contains(&i) {
                        continue;
                    }
                    let dist = dist_sq(x.row(i), &centroids[labels[i]]);
                    if dist > far_d {
                        far_d = dist;
                        far_i = i;
                    }
                }
                reseed_taken.push(far_i);
                centroids[c] = x.row(far_i).to_vec();
                shift = f64::INFINITY; // force another assignment pass
            }
        }
        if shift < opts.tol {
            break;
        }
    }

    // final assignment consistent with returned centroids
    let mut inertia = 0.0;
    for i in 0..n {
        let row = x.row(i);
        let mut best_c = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let dist = dist_sq(row, centroid);
            if dist < best_d {
                best_d = dist;
                best_c = c;
            }
        }
        labels[i] = best_c;
        inertia += best_d;
    }
    (labels, inertia)
}

/// k-means++: first centroid uniform, then proportional to squared
/// distance from the nearest chosen centroid. Degenerate all-zero weights
/// fall back to uniform choice.
fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(x.row(rng.gen_range(0..n)).to_vec());
    let mut min_dist: Vec<f64> = (0..n)
        .map(|i| dist_sq(x.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = min_dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_dist.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(x.row(idx).to_vec());
        for i in 0..n {
            let dist = dist_sq(x.row(i), centroids.last().expect("just pushed"));
            if dist < min_dist[i] {
                min_dist[i] = dist;
            }
        }
    }
    centroids
}
