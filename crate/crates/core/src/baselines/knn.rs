use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::InteractionMatrix;
use crate::error::{Error, Result};

/// Sparse similarity matrix, one sorted `(column, weight)` list per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SimilarityMatrix {
    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) || row.last().is_some_and(|&(c, _)| c >= n_cols) {
                return Err(Error::invalid("similarity row has duplicate or out-of-range columns"));
            }
        }
        Ok(Self { n_cols, rows })
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|r| (0..m.ncols()).filter(|&c| m[(r, c)] != 0.0).map(|c| (c, m[(r, c)])).collect())
            .collect();
        Self { n_cols: m.ncols(), rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.rows[r];
        row.binary_search_by_key(&c, |&(c, _)| c).map(|i| row[i].1).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows(), self.n_cols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| row.iter().map(|&(c, v)| (c, f(r, c, v))).collect())
            .collect();
        Self { n_cols: self.n_cols, rows }
    }

    /// Keeps the `k` largest non-zero entries of every row (ties: lower column first).
    pub fn truncate_top_k(&self, k: usize) -> Self {
        let rows = self.rows.iter().map(|row| top_k_of(row.iter().copied(), k)).collect();
        Self { n_cols: self.n_cols, rows }
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n_cols];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                rows[c].push((r, v));
            }
        }
        Self {
            n_cols: self.n_rows(),
            rows,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
    }
}

pub(crate) fn top_k_of(entries: impl Iterator<Item = (usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    let mut kept: Vec<(usize, f64)> = entries.filter(|&(_, v)| v != 0.0).collect();
    if kept.len() > k {
        kept.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.truncate(k);
    }
    kept.sort_by_key(|&(c, _)| c);
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Item,
    User,
}

fn user_rows(train: &InteractionMatrix) -> Vec<Vec<(usize, f64)>> {
    (0..train.n_users())
        .map(|u| train.user_row(u).iter().map(|e| (e.item, e.value)).collect())
        .collect()
}

/// Shrunk cosine between the vectors in `own`; `other` is the transposed
/// view used to enumerate co-occurrences.
fn shrunk_cosine(
    own: &[Vec<(usize, f64)>],
    other: &[Vec<(usize, f64)>],
    shrink: f64,
    top_k: usize,
) -> Vec<Vec<(usize, f64)>> {
    let norms: Vec<f64> = own
        .iter()
        .map(|v| v.iter().map(|&(_, x)| x * x).sum::<f64>().sqrt())
        .collect();
    (0..own.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; own.len()], Vec::<usize>::new()),
            |(acc, touched), a| {
                for &(o, x) in &own[a] {
                    for &(b, y) in &other[o] {
                        if acc[b] == 0.0 {
                            touched.push(b);
                        }
                        acc[b] += x * y;
                    }
                }
                touched.sort_unstable();
                touched.dedup();
                let row = touched.iter().filter(|&&b| b != a).map(|&b| {
                    let denom = norms[a] * norms[b] + shrink;
                    let s = if denom > 0.0 { acc[b] / denom } else { 0.0 };
                    (b, s)
                });
                let row = top_k_of(row, top_k);
                for &b in touched.iter() {
                    acc[b] = 0.0;
                }
                touched.clear();
                row
            },
        )
        .collect()
}

/// Cosine similarity with shrinkage, `s_ab = v_a . v_b / (|v_a| |v_b| + shrink)`,
/// zero diagonal, rows truncated to `top_k`.
pub fn cosine_similarity_shrunk(
    train: &InteractionMatrix,
    shrink: f64,
    top_k: usize,
    axis: Axis,
) -> Result<SimilarityMatrix> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    if !(shrink >= 0.0) {
        return Err(Error::invalid("shrink must be non-negative"));
    }
    let by_user = user_rows(train);
    let by_item = train.item_columns();
    let rows = match axis {
        Axis::Item => shrunk_cosine(&by_item, &by_user, shrink, top_k),
        Axis::User => shrunk_cosine(&by_user, &by_item, shrink, top_k),
    };
    let n = rows.len();
    Ok(SimilarityMatrix { n_cols: n, rows })
}

/// Neighbourhood scores. Item axis: profile row times the item similarity
/// matrix. User axis: similarity row of `user` times the interaction matrix.
pub fn knn_scores(sim: &SimilarityMatrix, train: &InteractionMatrix, user: usize, axis: Axis) -> Vec<f64> {
    let mut scores = vec![0.0; train.n_items()];
    match axis {
        Axis::Item => {
            for e in train.user_row(user) {
                for &(j, s) in sim.row(e.item) {
                    scores[j] += e.value * s;
                }
            }
        }
        Axis::User => {
            for &(v, s) in sim.row(user) {
                for e in train.user_row(v) {
                    scores[e.item] += s * e.value;
                }
            }
        }
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Interaction, Partition};
    use rand::Rng;

    fn random_binary(m: usize, n: usize, seed: u64) -> InteractionMatrix {
        let mut r = crate::rng::seeded(seed);
        let mut entries = Vec::new();
        for u in 0..m {
            for i in 0..n {
                if r.random_bool(0.45) {
                    entries.push(Interaction::new(u, i));
                }
            }
        }
        InteractionMatrix::from_entries(m, n, entries, Partition::Train).unwrap()
    }

    fn dense_cosine(r: &nalgebra::DMatrix<f64>, shrink: f64) -> nalgebra::DMatrix<f64> {
        let n = r.ncols();
        let mut s = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (mut dot, mut ni, mut nj) = (0.0, 0.0, 0.0);
                for u in 0..r.nrows() {
                    dot += r[(u, i)] * r[(u, j)];
                    ni += r[(u, i)] * r[(u, i)];
                    nj += r[(u, j)] * r[(u, j)];
                }
                let d = ni.sqrt() * nj.sqrt() + shrink;
                s[(i, j)] = if d > 0.0 { dot / d } else { 0.0 };
            }
        }
        s
    }

    #[test]
    fn identical_columns() {
        let m = InteractionMatrix::from_entries(
            1,
            2,
            vec![Interaction::new(0, 0), Interaction::new(0, 1)],
            Partition::Train,
        )
        .unwrap();
        let s = cosine_similarity_shrunk(&m, 0.0, 10, Axis::Item).unwrap();
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(0, 0), 0.0);
        let s = cosine_similarity_shrunk(&m, 1.0, 10, Axis::Item).unwrap();
        assert_eq!(s.get(0, 1), 0.5);
    }

    #[test]
    fn matches_dense_loop() {
        let m = random_binary(6, 5, 12);
        for shrink in [0.0, 2.5] {
            let got = cosine_similarity_shrunk(&m, shrink, 100, Axis::Item).unwrap().to_dense();
            let want = dense_cosine(&m.to_dense(), shrink);
            assert!((got - want).abs().max() < 1e-12);
            let got = cosine_similarity_shrunk(&m, shrink, 100, Axis::User).unwrap().to_dense();
            let want = dense_cosine(&m.to_dense().transpose(), shrink);
            assert!((got - want).abs().max() < 1e-12);
        }
    }

    #[test]
    fn symmetric_without_shrink() {
        let m = random_binary(20, 12, 4);
        let s = cosine_similarity_shrunk(&m, 0.0, usize::MAX, Axis::Item).unwrap().to_dense();
        assert!((&s - s.transpose()).abs().max() == 0.0);
        assert!(s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn truncation_keeps_largest() {
        let m = random_binary(30, 10, 5);
        let full = cosine_similarity_shrunk(&m, 1.0, usize::MAX, Axis::Item).unwrap();
        let top = cosine_similarity_shrunk(&m, 1.0, 3, Axis::Item).unwrap();
        for r in 0..10 {
            assert!(top.row(r).len() <= 3);
            let min_kept = top.row(r).iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            let dropped = full.row(r).iter().filter(|(c, _)| top.get(r, *c) == 0.0);
            for &(_, v) in dropped {
                assert!(v <= min_kept);
            }
        }
        assert!(cosine_similarity_shrunk(&m, 1.0, 0, Axis::Item).is_err());
    }

    #[test]
    fn one_hot_profile_reads_similarity_row() {
        let m = random_binary(8, 6, 9);
        let sim = cosine_similarity_shrunk(&m, 0.5, 100, Axis::Item).unwrap();
        let probe = InteractionMatrix::from_entries(1, 6, vec![Interaction::new(0, 3)], Partition::Train).unwrap();
        let scores = knn_scores(&sim, &probe, 0, Axis::Item);
        for j in 0..6 {
            assert_eq!(scores[j], sim.get(3, j));
        }
        let empty = InteractionMatrix::empty(1, 6, Partition::Train);
        assert_eq!(knn_scores(&sim, &empty, 0, Axis::Item), vec![0.0; 6]);
    }

    #[test]
    fn scores_match_summation() {
        let m = random_binary(7, 6, 21);
        let dense = m.to_dense();
        let isim = cosine_similarity_shrunk(&m, 0.3, 100, Axis::Item).unwrap();
        let usim = cosine_similarity_shrunk(&m, 0.3, 100, Axis::User).unwrap();
        let (is, us) = (isim.to_dense(), usim.to_dense());
        for u in 0..7 {
            let item_based = knn_scores(&isim, &m, u, Axis::Item);
            let user_based = knn_scores(&usim, &m, u, Axis::User);
            for j in 0..6 {
                let a: f64 = (0..6).map(|i| dense[(u, i)] * is[(i, j)]).sum();
                let b: f64 = (0..7).map(|v| us[(u, v)] * dense[(v, j)]).sum();
                assert!((item_based[j] - a).abs() < 1e-12);
                assert!((user_based[j] - b).abs() < 1e-12);
            }
        }
    }
}
