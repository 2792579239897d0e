//! Property tests for the library's contract invariants: similarity bounds,
//! log-sum-exp equivalence, loss positivity and scale invariance, virtual
//! sample linearity, metric invariances, and format roundtrips.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scl_core::clustering::{estimate_k_eigengap, normalized_laplacian, symmetric_eigendecomp, symmetrize};
use scl_core::losses::{adaptive_tau, contrastive_loss};
use scl_core::metrics::{clustering_accuracy, nmi};
use scl_core::model::generate_virtual;
use scl_core::tensor::{cosine, Matrix, Tape, COSINE_NORM_EPS};

fn matrix_strategy(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(lo..hi, rows * cols)
        .prop_map(move |data| Matrix::from_vec(rows, cols, data).unwrap())
}

fn naive_contrastive(z: &Matrix, v: &Matrix, tau: f64) -> Vec<f64> {
    let n = z.rows();
    (0..n)
        .map(|i| {
            let pos = cosine(z.row(i), v.row(i), COSINE_NORM_EPS);
            let mut denom = 0.0;
            for j in 0..n {
                if j != i {
                    denom += (cosine(z.row(i), z.row(j), COSINE_NORM_EPS) / tau).exp();
                }
                denom += (cosine(z.row(i), v.row(j), COSINE_NORM_EPS) / tau).exp();
            }
            -((pos / tau).exp() / denom).ln()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_matrix_entries_lie_in_unit_interval(
        x in matrix_strategy(4, 3, -10.0, 10.0),
        y in matrix_strategy(5, 3, -10.0, 10.0),
    ) {
        let mut tape = Tape::new();
        let xi = tape.input(&x);
        let yi = tape.input(&y);
        let s = tape.row_cosine(xi, yi).unwrap();
        for &v in tape.values(s) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v), "cosine {v}");
        }
    }

    #[test]
    fn matmul_is_associative(
        a in matrix_strategy(3, 4, -1.0, 1.0),
        b in matrix_strategy(4, 5, -1.0, 1.0),
        c in matrix_strategy(5, 2, -1.0, 1.0),
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        let denom = left.frobenius_norm().max(1.0);
        prop_assert!(left.sub(&right).unwrap().frobenius_norm() <= 1e-10 * denom);
    }

    #[test]
    fn contrastive_lse_equals_naive_path(
        z in matrix_strategy(5, 4, -2.0, 2.0),
        v in matrix_strategy(5, 4, -2.0, 2.0),
        tau in 0.02f64..2.0,
    ) {
        let mut tape = Tape::new();
        let zi = tape.input(&z);
        let vi = tape.input(&v);
        let loss = contrastive_loss(&mut tape, zi, vi, tau).unwrap();
        let per_sample = naive_contrastive(&z, &v, tau);
        let naive: f64 = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        prop_assert!((tape.scalar(loss) - naive).abs() < 1e-10,
            "lse {} vs naive {naive}", tape.scalar(loss));
    }

    #[test]
    fn contrastive_per_sample_terms_are_positive(
        z in matrix_strategy(4, 3, -2.0, 2.0),
        v in matrix_strategy(4, 3, -2.0, 2.0),
        tau in 0.05f64..2.0,
    ) {
        // the denominator strictly contains the numerator plus 2N-2 more
        // positive terms, so every per-sample loss is > 0
        for term in naive_contrastive(&z, &v, tau) {
            prop_assert!(term > 0.0, "per-sample term {term}");
        }
    }

    #[test]
    fn contrastive_invariant_to_positive_row_rescaling(
        z in matrix_strategy(4, 3, -2.0, 2.0),
        v in matrix_strategy(4, 3, -2.0, 2.0),
        scales in prop::collection::vec(0.1f64..10.0, 8),
    ) {
        let tau = 0.5;
        let mut tape = Tape::new();
        let zi = tape.input(&z);
        let vi = tape.input(&v);
        let base = contrastive_loss(&mut tape, zi, vi, tau).unwrap();
        let base = tape.scalar(base);

        let mut z2 = z.clone();
        let mut v2 = v.clone();
        for i in 0..4 {
            for j in 0..3 {
                z2.set(i, j, z2.get(i, j) * scales[i]);
                v2.set(i, j, v2.get(i, j) * scales[4 + i]);
            }
        }
        let mut tape = Tape::new();
        let zi = tape.input(&z2);
        let vi = tape.input(&v2);
        let scaled = contrastive_loss(&mut tape, zi, vi, tau).unwrap();
        let scaled = tape.scalar(scaled);
        prop_assert!((base - scaled).abs() <= 1e-10 * base.abs().max(1.0),
            "{base} vs {scaled}");
    }

    #[test]
    fn adaptive_tau_stays_within_clamp_bounds(
        z in matrix_strategy(4, 3, -2.0, 2.0),
        v in matrix_strategy(4, 3, -2.0, 2.0),
        t in 0.01f64..1.0,
    ) {
        let eps = 0.05;
        let tau = adaptive_tau(&z, &v, t, eps).unwrap();
        prop_assert!(tau >= t - 1e-12 && tau <= t / eps + 1e-12, "tau {tau}");
    }

    #[test]
    fn virtual_sample_map_is_linear_in_affinity(
        a1 in matrix_strategy(4, 4, -1.0, 1.0),
        a2 in matrix_strategy(4, 4, -1.0, 1.0),
        z in matrix_strategy(4, 3, -1.0, 1.0),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let zero_diag = |mut m: Matrix| {
            for i in 0..4 {
                m.set(i, i, 0.0);
            }
            m
        };
        let a1 = zero_diag(a1);
        let a2 = zero_diag(a2);
        let v_of = |a: &Matrix| -> Matrix {
            let mut tape = Tape::new();
            let ai = tape.input(a);
            let zi = tape.input(&z);
            let v = generate_virtual(&mut tape, ai, zi).unwrap();
            tape.value(v)
        };
        let combo = a1.scale(alpha).add(&a2.scale(beta)).unwrap();
        let lhs = v_of(&combo);
        let rhs = v_of(&a1).scale(alpha).add(&v_of(&a2).scale(beta)).unwrap();
        let denom = lhs.frobenius_norm().max(1.0);
        prop_assert!(lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-10 * denom);
    }

    #[test]
    fn metrics_invariant_under_relabeling(
        labels in prop::collection::vec(0usize..4, 12),
        perm_seed in 0u64..1000,
    ) {
        // apply a random permutation of the label ids to pred; ACC and NMI
        // against the original must not change
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        let truth: Vec<usize> = labels.iter().map(|&l| (l * 7 + 1) % 3).collect();
        let mut perm: Vec<usize> = (0..4).collect();
        for i in (1..4).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let acc1 = clustering_accuracy(&labels, &truth).unwrap();
        let acc2 = clustering_accuracy(&relabeled, &truth).unwrap();
        prop_assert_eq!(acc1, acc2);
        let n1 = nmi(&labels, &truth).unwrap();
        let n2 = nmi(&relabeled, &truth).unwrap();
        prop_assert!((n1 - n2).abs() < 1e-12);
    }

    #[test]
    fn metric_bounds_hold(
        pred in prop::collection::vec(0usize..5, 10),
        truth in prop::collection::vec(0usize..5, 10),
    ) {
        let acc = clustering_accuracy(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        // at least one point is matched under the optimal map
        prop_assert!(acc >= 1.0 / 10.0);
        let v = nmi(&pred, &truth).unwrap();
        prop_assert!(v >= 0.0 && v <= 1.0 + 1e-12, "nmi {v}");
    }

    #[test]
    fn metrics_are_symmetric_in_arguments(
        pred in prop::collection::vec(0usize..4, 9),
        truth in prop::collection::vec(0usize..4, 9),
    ) {
        prop_assert_eq!(
            clustering_accuracy(&pred, &truth).unwrap(),
            clustering_accuracy(&truth, &pred).unwrap()
        );
        let a = nmi(&pred, &truth).unwrap();
        let b = nmi(&truth, &pred).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn embedding_file_roundtrip(
        data in prop::collection::vec(-1e6f64..1e6, 12),
    ) {
        let m = Matrix::from_vec(3, 4, data).unwrap();
        let dir = std::env::temp_dir().join(format!("scl-prop-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("prop.scle");
        scl_core::data_io::write_embeddings(&path, &m, scl_core::data_io::Dtype::F64).unwrap();
        let back = scl_core::data_io::read_embeddings(&path).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn laplacian_spectrum_in_standard_range(
        a in matrix_strategy(6, 6, -2.0, 2.0),
    ) {
        let s = symmetrize(&a).unwrap();
        let l = normalized_laplacian(&s);
        let (vals, _) = symmetric_eigendecomp(&l).unwrap();
        for v in &vals {
            prop_assert!(*v > -1e-10 && *v < 2.0 + 1e-10, "eigenvalue {v}");
        }
        // ascending order is part of the contract estimate_k relies on
        for w in vals.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-12);
        }
        let _ = estimate_k_eigengap(&vals, 4).unwrap();
    }
}

/// Exhaustive relabeling invariance for k <= 4: every permutation of the
/// label ids leaves both metrics unchanged.
#[test]
fn metrics_invariant_under_all_relabelings_k4() {
    let pred = vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 0, 2];
    let truth = vec![0, 0, 1, 1, 2, 2, 3, 3, 0, 1, 2, 3];
    let acc0 = clustering_accuracy(&pred, &truth).unwrap();
    let nmi0 = nmi(&pred, &truth).unwrap();
    let mut perm = vec![0usize, 1, 2, 3];
    permutations(&mut perm, 0, &mut |p| {
        let relabeled: Vec<usize> = pred.iter().map(|&l| p[l]).collect();
        assert_eq!(clustering_accuracy(&relabeled, &truth).unwrap(), acc0);
        assert!((nmi(&relabeled, &truth).unwrap() - nmi0).abs() < 1e-12);
        // relabeling the truth side must not matter either
        let truth_relabeled: Vec<usize> = truth.iter().map(|&l| p[l]).collect();
        assert_eq!(clustering_accuracy(&pred, &truth_relabeled).unwrap(), acc0);
        assert!((nmi(&pred, &truth_relabeled).unwrap() - nmi0).abs() < 1e-12);
    });
}

fn permutations(perm: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == perm.len() {
        visit(perm);
        return;
    }
    for i in start..perm.len() {
        perm.swap(start, i);
        permutations(perm, start + 1, visit);
        perm.swap(start, i);
    }
}
