//! Bipartite random-walk item similarities.

use rayon::prelude::*;

use super::knn::{top_k_of, SimilarityMatrix};
use crate::dataio::InteractionMatrix;
use crate::error::{Error, Result};

/// Three-step walk item -> user -> item with transition probabilities raised
/// to `alpha`: `s_ij = sum_u P(u | i)^alpha * P(j | u)^alpha`. The diagonal is
/// zeroed and each row keeps its `top_k` largest weights.
pub fn p3alpha_similarity(train: &InteractionMatrix, alpha: f64, top_k: usize) -> Result<SimilarityMatrix> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha must be non-negative"));
    }
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let n = train.n_items();
    let user_mass: Vec<f64> = (0..train.n_users())
        .map(|u| train.user_row(u).iter().map(|e| e.value).sum())
        .collect();
    // P(j | u) for every stored (u, j)
    let user_step: Vec<Vec<(usize, f64)>> = (0..train.n_users())
        .map(|u| {
            train
                .user_row(u)
                .iter()
                .map(|e| (e.item, (e.value / user_mass[u]).powf(alpha)))
                .collect()
        })
        .collect();
    let columns = train.item_columns();
    let rows = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0f64; n],
            |acc, i| {
                let mass: f64 = columns[i].iter().map(|&(_, v)| v).sum();
                let mut touched = Vec::new();
                for &(u, v) in &columns[i] {
                    let back = (v / mass).powf(alpha);
                    for &(j, fwd) in &user_step[u] {
                        if j != i {
                            touched.push(j);
                            acc[j] += back * fwd;
                        }
                    }
                }
                touched.sort_unstable();
                touched.dedup();
                let row = top_k_of(touched.iter().map(|&j| (j, acc[j])), top_k);
                for &j in &touched {
                    acc[j] = 0.0;
                }
                row
            },
        )
        .collect();
    SimilarityMatrix::from_rows(n, rows)
}

/// Divides column `j` by `popularity[j]^beta`. Columns of never-seen items
/// become zero; `beta = 0` returns the matrix untouched.
pub fn rp3beta_rerank(p3: &SimilarityMatrix, popularity: &[usize], beta: f64) -> Result<SimilarityMatrix> {
    if popularity.len() != p3.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: p3.n_cols(),
            actual: popularity.len(),
        });
    }
    if beta == 0.0 {
        return Ok(p3.clone());
    }
    let scale: Vec<f64> = popularity
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { (c as f64).powf(beta) })
        .collect();
    Ok(p3.map_values(|_, j, v| if scale[j] == 0.0 { 0.0 } else { v / scale[j] }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Interaction, Partition};
    use rand::Rng;

    fn matrix(m: usize, n: usize, pairs: &[(usize, usize)]) -> InteractionMatrix {
        let entries = pairs.iter().map(|&(u, i)| Interaction::new(u, i)).collect();
        InteractionMatrix::from_entries(m, n, entries, Partition::Train).unwrap()
    }

    fn random(m: usize, n: usize, seed: u64) -> InteractionMatrix {
        let mut r = crate::rng::seeded(seed);
        let mut pairs = Vec::new();
        for u in 0..m {
            for i in 0..n {
                if r.random_bool(0.35) {
                    pairs.push((u, i));
                }
            }
        }
        matrix(m, n, &pairs)
    }

    #[test]
    fn disconnected_items() {
        let s = p3alpha_similarity(&matrix(2, 2, &[(0, 0), (1, 1)]), 1.0, 10).unwrap();
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 0), 0.0);
    }

    /// Sums the probability of every item -> user -> item walk.
    fn walk_oracle(m: &InteractionMatrix, alpha: f64) -> nalgebra::DMatrix<f64> {
        let d = m.to_dense();
        let (nu, ni) = (d.nrows(), d.ncols());
        let mut s = nalgebra::DMatrix::zeros(ni, ni);
        for i in 0..ni {
            let item_deg: f64 = (0..nu).map(|u| d[(u, i)]).sum();
            for u in 0..nu {
                if d[(u, i)] == 0.0 {
                    continue;
                }
                let user_deg: f64 = (0..ni).map(|j| d[(u, j)]).sum();
                for j in 0..ni {
                    if j != i && d[(u, j)] != 0.0 {
                        s[(i, j)] += (d[(u, i)] / item_deg).powf(alpha) * (d[(u, j)] / user_deg).powf(alpha);
                    }
                }
            }
        }
        s
    }

    #[test]
    fn single_user_two_items() {
        let m = matrix(1, 2, &[(0, 0), (0, 1)]);
        let s = p3alpha_similarity(&m, 1.0, 10).unwrap();
        assert_eq!(s.get(0, 1), 0.5);
        assert_eq!(walk_oracle(&m, 1.0)[(0, 1)], 0.5);
    }

    #[test]
    fn alpha_zero_counts_shared_users() {
        let m = random(15, 8, 3);
        let s = p3alpha_similarity(&m, 0.0, usize::MAX).unwrap().to_dense();
        let d = m.to_dense();
        for i in 0..8 {
            for j in 0..8 {
                let shared = if i == j { 0.0 } else { (0..15).filter(|&u| d[(u, i)] * d[(u, j)] > 0.0).count() as f64 };
                assert_eq!(s[(i, j)], shared);
            }
        }
    }

    #[test]
    fn matches_walk_enumeration() {
        let m = random(12, 9, 8);
        for alpha in [0.5, 1.0, 1.7] {
            let s = p3alpha_similarity(&m, alpha, usize::MAX).unwrap().to_dense();
            assert!((s - walk_oracle(&m, alpha)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn rerank_examples() {
        let p3 = SimilarityMatrix::from_rows(2, vec![vec![(1, 2.0)], vec![(0, 1.0)]]).unwrap();
        let same = rp3beta_rerank(&p3, &[3, 4], 0.0).unwrap();
        assert_eq!(same, p3);
        let r = rp3beta_rerank(&p3, &[3, 4], 1.0).unwrap();
        assert_eq!(r.get(0, 1), 0.5);
        let zero = rp3beta_rerank(&p3, &[0, 4], 1.0).unwrap();
        assert_eq!(zero.get(1, 0), 0.0);
        assert!(rp3beta_rerank(&p3, &[1], 1.0).is_err());
    }

    #[test]
    fn rerank_matches_elementwise_divide() {
        let m = random(20, 10, 13);
        let p3 = p3alpha_similarity(&m, 0.8, usize::MAX).unwrap();
        let pop = m.item_counts();
        let r = rp3beta_rerank(&p3, &pop, 0.6).unwrap().to_dense();
        let d = p3.to_dense();
        for i in 0..10 {
            for j in 0..10 {
                let want = if pop[j] == 0 { 0.0 } else { d[(i, j)] / (pop[j] as f64).powf(0.6) };
                assert_eq!(r[(i, j)], want);
            }
        }
    }
}
