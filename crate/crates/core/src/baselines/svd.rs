use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::dataio::InteractionMatrix;
use crate::embed::EmbeddingPair;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Matrices whose smaller side is at most this size are decomposed densely.
const DENSE_LIMIT: usize = 1000;
const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 4;

/// Rank-`rank` truncated SVD of the interaction matrix: `(U_k, sigma_k, V_k)`
/// with singular values in descending order.
pub fn truncated_svd(
    train: &InteractionMatrix,
    rank: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, n) = (train.n_users(), train.n_items());
    if rank == 0 || rank > m.min(n) {
        return Err(Error::invalid(format!(
            "rank {rank} outside 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    if m.min(n) <= DENSE_LIMIT || rank + OVERSAMPLE >= m.min(n) {
        Ok(dense_svd(&train.to_dense(), rank))
    } else {
        Ok(randomized_svd(train, rank, seed))
    }
}

fn dense_svd(a: &DMatrix<f64>, rank: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    order.truncate(rank);
    let uk = DMatrix::from_fn(a.nrows(), rank, |r, c| u[(r, order[c])]);
    let vk = DMatrix::from_fn(a.ncols(), rank, |r, c| vt[(order[c], r)]);
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    (uk, s, vk)
}

/// `A * D` for sparse `A` (M x N) and dense `D` (N x l).
fn sparse_mul(a: &InteractionMatrix, d: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.n_users(), d.ncols());
    for e in a.entries() {
        for c in 0..d.ncols() {
            out[(e.user, c)] += e.value * d[(e.item, c)];
        }
    }
    out
}

/// `A^T * D` for sparse `A` (M x N) and dense `D` (M x l).
fn sparse_tmul(a: &InteractionMatrix, d: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.n_items(), d.ncols());
    for e in a.entries() {
        for c in 0..d.ncols() {
            out[(e.item, c)] += e.value * d[(e.user, c)];
        }
    }
    out
}

fn orthonormal(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Randomized range finder with power iterations, followed by an exact SVD of
/// the small projected matrix.
pub(crate) fn randomized_svd(a: &InteractionMatrix, rank: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let width = (rank + OVERSAMPLE).min(a.n_users().min(a.n_items()));
    let mut r = rng::seeded(seed);
    let omega = DMatrix::from_fn(a.n_items(), width, |_, _| r.sample::<f64, _>(StandardNormal));
    let mut q = orthonormal(sparse_mul(a, &omega));
    for _ in 0..POWER_ITERS {
        let z = orthonormal(sparse_tmul(a, &q));
        q = orthonormal(sparse_mul(a, &z));
    }
    let b = sparse_tmul(a, &q).transpose();
    let (ub, s, vk) = dense_svd(&b, rank);
    (q * ub, s, vk)
}

/// PureSVD: scores are rows of `U_k Sigma_k V_k^T`, stored as user factors
/// `U_k Sigma_k` and item factors `V_k`.
pub fn fit_puresvd(train: &InteractionMatrix, rank: usize, seed: u64) -> Result<EmbeddingPair<f64>> {
    let (u, s, v) = truncated_svd(train, rank, seed)?;
    let users = Matrix::from_fn(u.nrows(), rank, |r, c| u[(r, c)] * s[c]);
    let items = Matrix::from_fn(v.nrows(), rank, |r, c| v[(r, c)]);
    EmbeddingPair::new(users, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Interaction, Partition};

    fn from_dense(d: &DMatrix<f64>) -> InteractionMatrix {
        let mut entries = Vec::new();
        for u in 0..d.nrows() {
            for i in 0..d.ncols() {
                if d[(u, i)] != 0.0 {
                    entries.push(Interaction {
                        user: u,
                        item: i,
                        value: d[(u, i)],
                        timestamp: None,
                    });
                }
            }
        }
        InteractionMatrix::from_entries(d.nrows(), d.ncols(), entries, Partition::Train).unwrap()
    }

    fn reconstruct(pair: &EmbeddingPair<f64>) -> DMatrix<f64> {
        let u = pair.users().to_nalgebra();
        let v = pair.items().to_nalgebra();
        u * v.transpose()
    }

    #[test]
    fn full_rank_reconstructs() {
        let mut r = rng::seeded(1);
        let d = DMatrix::from_fn(5, 4, |_, _| r.random_range(0.1..3.0));
        let pair = fit_puresvd(&from_dense(&d), 4, 0).unwrap();
        assert!((reconstruct(&pair) - &d).abs().max() < 1e-8);
    }

    #[test]
    fn rank_one_is_exact() {
        let a = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 0.5, 3.0]);
        let b = DMatrix::from_column_slice(3, 1, &[2.0, 1.0, 4.0]);
        let d = &a * b.transpose();
        let pair = fit_puresvd(&from_dense(&d), 1, 0).unwrap();
        assert!((reconstruct(&pair) - &d).abs().max() < 1e-10);
    }

    #[test]
    fn rank_out_of_range() {
        let d = DMatrix::from_element(3, 2, 1.0);
        assert!(fit_puresvd(&from_dense(&d), 3, 0).is_err());
        assert!(fit_puresvd(&from_dense(&d), 0, 0).is_err());
    }

    #[test]
    fn randomized_matches_dense_on_low_rank_data() {
        let mut r = rng::seeded(4);
        let a = DMatrix::from_fn(60, 3, |_, _| r.random_range(0.0..1.0));
        let b = DMatrix::from_fn(45, 3, |_, _| r.random_range(0.0..1.0));
        let d = a * b.transpose();
        let m = from_dense(&d);
        let (u1, s1, v1) = randomized_svd(&m, 3, 9);
        let (u2, s2, v2) = dense_svd(&d, 3);
        for (x, y) in s1.iter().zip(&s2) {
            assert!((x - y).abs() < 1e-8 * y.max(1.0));
        }
        let rec1 = &u1 * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s1)) * v1.transpose();
        let rec2 = &u2 * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s2)) * v2.transpose();
        assert!((rec1 - rec2).abs().max() < 1e-8);
    }

    #[test]
    fn rank_two_matches_eigen_truncation() {
        // oracle: project onto the top eigenvectors of A^T A
        let mut r = rng::seeded(12);
        let d = DMatrix::from_fn(6, 5, |_, _| r.random_range(0.0..2.0));
        let pair = fit_puresvd(&from_dense(&d), 2, 0).unwrap();
        let eig = (d.transpose() * &d).symmetric_eigen();
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vk = DMatrix::from_fn(5, 2, |row, c| eig.eigenvectors[(row, order[c])]);
        let oracle = &d * &vk * vk.transpose();
        assert!((reconstruct(&pair) - &oracle).norm() < 1e-8);
        let tail: f64 = order[2..].iter().map(|&i| eig.eigenvalues[i]).sum();
        assert!(((reconstruct(&pair) - &d).norm_squared() - tail).abs() < 1e-8);
    }
}
