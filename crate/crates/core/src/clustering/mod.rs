//! From learned affinities (or latents) to cluster labels: symmetrization,
//! the normalized Laplacian, a Jacobi eigensolver, eigengap estimation of
//! the cluster count, spectral clustering and k-means.

mod eigen;
mod kmeans;

pub use eigen::symmetric_eigendecomp;
pub use kmeans::{kmeans, kmeans_with, KMeansOptions};

use crate::error::{Result, SclError};
use crate::tensor::Matrix;

/// Nonnegative symmetric matrix with a zero diagonal, the input spectral
/// clustering expects. Obtain one via [`symmetrize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricAffinity {
    s: Matrix,
}

impl SymmetricAffinity {
    pub fn matrix(&self) -> &Matrix {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.s.rows()
    }

    pub fn into_matrix(self) -> Matrix {
        self.s
    }

    /// Validate an existing matrix: exact symmetry, nonnegative entries,
    /// zero diagonal.
    pub fn try_new(s: Matrix) -> Result<Self> {
        let n = s.rows();
        if s.cols() != n {
            return Err(SclError::shape("symmetric_affinity", s.shape(), (n, n)));
        }
        for i in 0..n {
            if s.get(i, i) != 0.0 {
                return Err(SclError::contract(format!(
                    "affinity diagonal must be zero, found {} at ({i},{i})",
                    s.get(i, i)
                )));
            }
            for j in (i + 1)..n {
                if s.get(i, j) != s.get(j, i) {
                    return Err(SclError::contract(format!(
                        "affinity not symmetric at ({i},{j})"
                    )));
                }
                if s.get(i, j) < 0.0 {
                    return Err(SclError::contract(format!(
                        "affinity has negative entry at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SymmetricAffinity { s })
    }
}

/// S = (|A| + |A^T|) / 2 with a forced zero diagonal. The learned affinity
/// is neither symmetric nor nonnegative; taking magnitudes keeps the
/// Laplacian positive semidefinite.
pub fn symmetrize(a: &Matrix) -> Result<SymmetricAffinity> {
    let n = a.rows();
    if a.cols() != n {
        return Err(SclError::shape("symmetrize", a.shape(), (n, n)));
    }
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a.get(i, j).abs() + a.get(j, i).abs()) / 2.0;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(SymmetricAffinity { s })
}

/// L_sym = I - D^{-1/2} S D^{-1/2}. Zero-degree rows contribute a plain
/// identity row (isolated vertex).
pub fn normalized_laplacian(s: &SymmetricAffinity) -> Matrix {
    let n = s.n();
    let m = s.matrix();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = m.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = -inv_sqrt_deg[i] * m.get(i, j) * inv_sqrt_deg[j];
            l.set(i, j, v);
            l.set(j, i, v);
        }
    }
    l
}

/// Choose k in [2, k_max] maximizing the gap between consecutive ascending
/// eigenvalues just above position k; ties break toward smaller k. Needs at
/// least k_max + 1 eigenvalues.
pub fn estimate_k_eigengap(eigenvalues: &[f64], k_max: usize) -> Result<usize> {
    if k_max < 2 {
        return Err(SclError::contract("eigengap estimation requires k_max >= 2"));
    }
    if eigenvalues.len() < k_max + 1 {
        return Err(SclError::contract(format!(
            "eigengap estimation needs at least k_max + 1 = {} eigenvalues, got {}",
            k_max + 1,
            eigenvalues.len()
        )));
    }
    let mut best_k = 2;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 2..=k_max {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best_gap {
            best_gap = gap;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// How the cluster count is chosen for [`spectral_cluster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    /// Estimate via the eigengap with the given upper bound.
    Auto { k_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Spectral,
    KMeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub k: usize,
    pub method: Method,
    /// Final within-cluster sum of squares (k-means path only).
    pub inertia: Option<f64>,
    /// Ascending Laplacian spectrum (spectral path only).
    pub eigenvalues: Option<Vec<f64>>,
}

/// Ng-Jordan-Weiss style spectral clustering: eigenvectors of L_sym for
/// the k smallest eigenvalues, rows normalized to unit length, then
/// k-means on the rows.
pub fn spectral_cluster(s: &SymmetricAffinity, k: KChoice, seed: u64) -> Result<ClusterResult> {
    let n = s.n();
    let l = normalized_laplacian(s);
    let (eigenvalues, eigenvectors) = symmetric_eigendecomp(&l)?;
    let k = match k {
        KChoice::Fixed(k) => k,
        KChoice::Auto { k_max } => estimate_k_eigengap(&eigenvalues, k_max.min(n - 1))?,
    };
    if k < 2 || k > n {
        return Err(SclError::contract(format!(
            "spectral clustering requires 2 <= k <= n, got k = {k} with n = {n}"
        )));
    }
    let mut embedding = Matrix::zeros(n, k);
    for i in 0..n {
        let norm: f64 = (0..k)
            .map(|c| eigenvectors.get(i, c) * eigenvectors.get(i, c))
            .sum::<f64>()
            .sqrt();
        if norm > 1e-12 {
            for c in 0..k {
                embedding.set(i, c, eigenvectors.get(i, c) / norm);
            }
        }
    }
    let km = kmeans(&embedding, k, seed)?;
    Ok(ClusterResult {
        labels: km.labels,
        k: km.k,
        method: Method::Spectral,
        inertia: None,
        eigenvalues: Some(eigenvalues),
    })
}
