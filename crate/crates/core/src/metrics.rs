//! Clustering evaluation: optimal cluster-to-class matching (Kuhn-Munkres),
//! Hungarian-matched accuracy, and normalized mutual information.

use crate::error::{Result, SclError};
use crate::tensor::Matrix;

/// Joint label-count table. Rows index predicted clusters, columns true
/// classes, both compacted to 0..k in ascending order of the original ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n: usize,
}

impl ContingencyTable {
    pub fn from_labels(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(SclError::contract(format!(
                "label length mismatch: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(SclError::contract("empty label vectors"));
        }
        let pred_ids = compact_ids(pred);
        let truth_ids = compact_ids(truth);
        let mut counts = vec![vec![0u64; truth_ids.len()]; pred_ids.len()];
        for (&p, &t) in pred.iter().zip(truth) {
            let pi = pred_ids.binary_search(&p).expect("id collected above");
            let ti = truth_ids.binary_search(&t).expect("id collected above");
            counts[pi][ti] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: pred.len(),
        })
    }

    pub fn k_pred(&self) -> usize {
        self.counts.len()
    }

    pub fn k_true(&self) -> usize {
        self.counts.first().map_or(0, |row| row.len())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let k = self.k_true();
        let mut sums = vec![0u64; k];
        for row in &self.counts {
            for (s, &c) in sums.iter_mut().zip(row) {
                *s += c;
            }
        }
        sums
    }
}

fn compact_ids(labels: &[usize]) -> Vec<usize> {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Minimum-cost perfect assignment on a square cost matrix via shortest
/// augmenting paths (Jonker-Volgenant flavor of Kuhn-Munkres), followed by
/// a tie-break pass that returns the lexicographically smallest optimal
/// permutation. `result[i]` is the column assigned to row i.
pub fn hungarian_assignment(cost: &Matrix) -> Result<Vec<usize>> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(SclError::shape("hungarian_assignment", cost.shape(), (n, n)));
    }
    if !cost.is_finite() {
        return Err(SclError::contract("cost matrix contains non-finite values"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (u, v) = solve_duals(cost);

    // Complementary slackness: optimal assignments use exactly the tight
    // edges, and every perfect matching of tight edges is optimal. Pick the
    // lexicographically smallest one greedily with feasibility checks.
    let eps = 1e-9 * cost.max_abs().max(1.0);
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (cost.get(i, j) - u[i] - v[j]).abs() <= eps)
                .collect()
        })
        .collect();

    let mut used_cols = vec![false; n];
    let mut assignment = vec![usize::MAX; n];
    for i in 0..n {
        let mut chosen = None;
        for &j in &tight[i] {
            if used_cols[j] {
                continue;
            }
            used_cols[j] = true;
            if rows_matchable(&tight, i + 1, &used_cols) {
                chosen = Some(j);
                break;
            }
            used_cols[j] = false;
        }
        let j = chosen.ok_or_else(|| {
            SclError::numeric("hungarian tie-break lost feasibility (degenerate duals)")
        })?;
        assignment[i] = j;
    }
    Ok(assignment)
}

/// Dual potentials (u, v) with u_i + v_j <= cost_ij and equality on a
/// perfect matching. Classic O(n^3) shortest-augmenting-path scheme.
fn solve_duals(cost: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = cost.rows();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // matched_row[j] = row occupying col j (1-based)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (u[1..].to_vec(), v[1..].to_vec())
}

/// Can rows from `start` on all be matched into unused columns along tight
/// edges? Kuhn's augmenting-path matching.
fn rows_matchable(tight: &[Vec<usize>], start: usize, used_cols: &[bool]) -> bool {
    let n = tight.len();
    if start >= n {
        return true;
    }
    let mut col_owner = vec![usize::MAX; n];
    for i in start..n {
        let mut visited = vec![false; n];
        if !augment(tight, i, used_cols, &mut col_owner, &mut visited) {
            return false;
        }
    }
    true
}

fn augment(
    tight: &[Vec<usize>],
    row: usize,
    used_cols: &[bool],
    col_owner: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for &j in &tight[row] {
        if used_cols[j] || visited[j] {
            continue;
        }
        visited[j] = true;
        if col_owner[j] == usize::MAX
            || augment(tight, col_owner[j], used_cols, col_owner, visited)
        {
            col_owner[j] = row;
            return true;
        }
    }
    false
}

/// Hungarian-matched clustering accuracy: the contingency table is padded
/// to a square, the best one-to-one cluster/class map is found by
/// minimizing negated counts, and the matched mass is divided by n.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let k = table.k_pred().max(table.k_true());
    let mut cost = Matrix::zeros(k, k);
    for (i, row) in table.counts().iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost.set(i, j, -(c as f64));
        }
    }
    let assignment = hungarian_assignment(&cost)?;
    let mut matched = 0u64;
    for (i, &j) in assignment.iter().enumerate() {
        if i < table.k_pred() && j < table.k_true() {
            matched += table.counts()[i][j];
        }
    }
    Ok(matched as f64 / table.n() as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// NMI with arithmetic-mean normalization, natural log. Two degenerate
/// single-cluster partitions score 1; exactly one scores 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let n = table.n() as f64;
    let row_sums = table.row_sums();
    let col_sums = table.col_sums();
    let h_pred = entropy(&row_sums, n);
    let h_true = entropy(&col_sums, n);
    if h_pred == 0.0 && h_true == 0.0 {
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_true == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts().iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let joint = c as f64 / n;
            mi += joint * ((c as f64 * n) / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
        }
    }
    Ok((mi / ((h_pred + h_true) / 2.0)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_min_assignment(cost: &Matrix) -> (f64, Vec<usize>) {
        let n = cost.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = (f64::INFINITY, perm.clone());
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = (0..n).map(|i| cost.get(i, p[i])).sum();
            if total < best.0 - 1e-12 {
                best = (total, p.to_vec());
            }
        });
        best
    }

    fn permute(perm: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
        if start == perm.len() {
            visit(perm);
            return;
        }
        for i in start..perm.len() {
            perm.swap(start, i);
            permute(perm, start + 1, visit);
            perm.swap(start, i);
        }
    }

    #[test]
    fn hungarian_identity_on_zero_diagonal() {
        let mut cost = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    cost.set(i, j, 1.0);
                }
            }
        }
        assert_eq!(hungarian_assignment(&cost).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn hungarian_two_by_two_example() {
        let cost = Matrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let sigma = hungarian_assignment(&cost).unwrap();
        assert_eq!(sigma, vec![1, 0]);
        let total: f64 = (0..2).map(|i| cost.get(i, sigma[i])).sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn hungarian_matches_brute_force_totals() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 10) as f64
        };
        for _ in 0..50 {
            let cost = Matrix::from_vec(5, 5, (0..25).map(|_| next()).collect()).unwrap();
            let sigma = hungarian_assignment(&cost).unwrap();
            let total: f64 = (0..5).map(|i| cost.get(i, sigma[i])).sum();
            let (best, _) = brute_force_min_assignment(&cost);
            assert_eq!(total, best);
        }
    }

    #[test]
    fn hungarian_tie_break_is_lexicographically_smallest() {
        // every assignment costs 2: all permutations optimal
        let cost = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(hungarian_assignment(&cost).unwrap(), vec![0, 1]);

        let cost = Matrix::zeros(3, 3);
        assert_eq!(hungarian_assignment(&cost).unwrap(), vec![0, 1, 2]);

        // row 0 must avoid col 0 to stay optimal
        let cost = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![0.0, 1.0, 1.0],
        ])
        .unwrap();
        let sigma = hungarian_assignment(&cost).unwrap();
        let total: f64 = (0..3).map(|i| cost.get(i, sigma[i])).sum();
        let (best, _) = brute_force_min_assignment(&cost);
        assert_eq!(total, best);
        assert_eq!(sigma, vec![1, 0, 2]);
    }

    #[test]
    fn hungarian_rejects_non_square() {
        let cost = Matrix::zeros(2, 3);
        assert!(hungarian_assignment(&cost).is_err());
    }

    #[test]
    fn accuracy_perfect_prediction() {
        let labels = vec![0, 1, 2, 1, 0, 2];
        assert_eq!(clustering_accuracy(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_constant_prediction_balanced_truth() {
        let pred = vec![0; 10];
        let truth = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_handles_sparse_label_ids() {
        let pred = vec![7, 7, 99, 99];
        let truth = vec![3, 3, 5, 5];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_rejects_mismatched_or_empty() {
        assert!(clustering_accuracy(&[0, 1], &[0]).is_err());
        assert!(clustering_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn nmi_perfect_prediction() {
        let labels = vec![0, 1, 0, 1, 2];
        let value = nmi(&labels, &labels).unwrap();
        assert!((value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_constant_prediction_is_zero() {
        let pred = vec![0; 6];
        let truth = vec![0, 0, 0, 1, 1, 1];
        assert_eq!(nmi(&pred, &truth).unwrap(), 0.0);
    }

    #[test]
    fn nmi_independent_partitions_is_zero() {
        let pred = vec![0, 0, 1, 1];
        let truth = vec![0, 1, 0, 1];
        assert!(nmi(&pred, &truth).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nmi_both_constant_is_one() {
        assert_eq!(nmi(&[0, 0, 0], &[5, 5, 5]).unwrap(), 1.0);
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = vec![0, 0, 1, 1, 2, 2, 0, 1];
        let b = vec![1, 1, 1, 0, 0, 2, 2, 2];
        assert_eq!(
            clustering_accuracy(&a, &b).unwrap(),
            clustering_accuracy(&b, &a).unwrap()
        );
        assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn contingency_counts_sum_to_n() {
        let pred = vec![0, 1, 1, 2, 2, 2];
        let truth = vec![1, 1, 0, 0, 2, 2];
        let table = ContingencyTable::from_labels(&pred, &truth).unwrap();
        let total: u64 = table.counts().iter().flatten().sum();
        assert_eq!(total as usize, table.n());
        assert_eq!(table.k_pred(), 3);
        assert_eq!(table.k_true(), 3);
    }
}
