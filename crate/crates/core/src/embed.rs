//! Latent factors, dot-product scoring, outer-product interaction maps and the
//! diagonal / off-diagonal masks used by the ablations.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// User factors `users` (M x K) and item factors `items` (N x K).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair<T> {
    users: Matrix<T>,
    items: Matrix<T>,
}

impl<T: Scalar> EmbeddingPair<T> {
    pub fn new(users: Matrix<T>, items: Matrix<T>) -> Result<Self> {
        if users.cols() != items.cols() {
            return Err(Error::DimensionMismatch {
                expected: users.cols(),
                actual: items.cols(),
            });
        }
        if users.as_slice().iter().chain(items.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("embeddings contain non-finite values"));
        }
        Ok(Self { users, items })
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn random(n_users: usize, n_items: usize, k: usize, scale: f64, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let mut draw = |_, _| T::lit(r.random_range(-scale..=scale));
        let users = Matrix::from_fn(n_users, k, &mut draw);
        let items = Matrix::from_fn(n_items, k, &mut draw);
        Self { users, items }
    }

    pub fn n_users(&self) -> usize {
        self.users.rows()
    }

    pub fn n_items(&self) -> usize {
        self.items.rows()
    }

    pub fn k(&self) -> usize {
        self.users.cols()
    }

    pub fn user(&self, u: usize) -> &[T] {
        self.users.row(u)
    }

    pub fn item(&self, i: usize) -> &[T] {
        self.items.row(i)
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [T] {
        self.users.row_mut(u)
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [T] {
        self.items.row_mut(i)
    }

    pub fn users(&self) -> &Matrix<T> {
        &self.users
    }

    pub fn items(&self) -> &Matrix<T> {
        &self.items
    }

    pub fn users_mut(&mut self) -> &mut Matrix<T> {
        &mut self.users
    }

    pub fn items_mut(&mut self) -> &mut Matrix<T> {
        &mut self.items
    }

    pub fn predict(&self, u: usize, i: usize) -> T {
        dot_prediction(self.user(u), self.item(i)).expect("pair shares K")
    }

    pub fn interaction_map(&self, u: usize, i: usize) -> InteractionMap<T> {
        let mut map = outer_product(self.user(u), self.item(i)).expect("pair shares K");
        map.user = Some(u);
        map.item = Some(i);
        map
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingPair<U> {
        EmbeddingPair {
            users: self.users.map(|v| U::lit(v.as_f64())),
            items: self.items.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Predicted relevance `sum_k p_k q_k`.
///
/// Products are accumulated in `f64` in ascending value order, which makes
/// the result independent of the factor order: a consistent permutation of
/// `p` and `q` yields a bitwise-identical score.
pub fn dot_prediction<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    let mut products: Vec<f64> = p.iter().zip(q).map(|(a, b)| a.as_f64() * b.as_f64()).collect();
    products.sort_unstable_by(f64::total_cmp);
    Ok(T::lit(products.into_iter().sum()))
}

/// K x K map `e[x][y] = p[x] * q[y]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMap<T> {
    k: usize,
    cells: Vec<T>,
    pub user: Option<usize>,
    pub item: Option<usize>,
}

impl<T: Scalar> InteractionMap<T> {
    pub fn from_cells(k: usize, cells: Vec<T>) -> Result<Self> {
        if cells.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                actual: cells.len(),
            });
        }
        Ok(Self {
            k,
            cells,
            user: None,
            item: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.cells[x * self.k + y]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.k).map(|x| self.get(x, x)).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    /// Cell-wise sum with another map of the same size.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.k != other.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                actual: other.k,
            });
        }
        let cells = self.cells.iter().zip(&other.cells).map(|(&a, &b)| a + b).collect();
        Ok(Self {
            k: self.k,
            cells,
            user: self.user,
            item: self.item,
        })
    }
}

pub fn outer_product<T: Scalar>(p: &[T], q: &[T]) -> Result<InteractionMap<T>> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    let k = p.len();
    let mut cells = Vec::with_capacity(k * k);
    for &px in p {
        for &qy in q {
            cells.push(px * qy);
        }
    }
    InteractionMap::from_cells(k, cells)
}

/// Which interaction-map cells reach the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    Full,
    /// Main diagonal only: the element-wise product.
    ElementWise,
    /// Off-diagonal cells only: cross-factor correlations.
    Correlations,
}

impl MaskMode {
    pub const ALL: [MaskMode; 3] = [MaskMode::Full, MaskMode::ElementWise, MaskMode::Correlations];

    pub fn keeps(self, x: usize, y: usize) -> bool {
        match self {
            MaskMode::Full => true,
            MaskMode::ElementWise => x == y,
            MaskMode::Correlations => x != y,
        }
    }

    /// Multiplicative 0/1 mask, row-major K x K.
    pub fn weights<T: Scalar>(self, k: usize) -> Vec<T> {
        (0..k * k)
            .map(|c| if self.keeps(c / k, c % k) { T::one() } else { T::zero() })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskMode::Full => "full",
            MaskMode::ElementWise => "element_wise",
            MaskMode::Correlations => "correlations",
        }
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(MaskMode::Full),
            "element_wise" | "elementwise" | "diagonal" => Ok(MaskMode::ElementWise),
            "correlations" | "off_diagonal" => Ok(MaskMode::Correlations),
            other => Err(Error::invalid(format!("unknown mask mode {other:?}"))),
        }
    }
}

pub fn apply_mask<T: Scalar>(map: &InteractionMap<T>, mode: MaskMode) -> InteractionMap<T> {
    let weights = mode.weights::<T>(map.k);
    InteractionMap {
        k: map.k,
        cells: map.cells.iter().zip(weights).map(|(&c, w)| c * w).collect(),
        user: map.user,
        item: map.item,
    }
}

/// Bijection on factor positions `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorPermutation {
    perm: Vec<usize>,
    pub seed: Option<u64>,
}

impl FactorPermutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let k = perm.len();
        let mut seen = vec![false; k];
        for &p in &perm {
            if p >= k || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidPermutation(format!("{perm:?} is not a bijection on 0..{k}")));
            }
        }
        Ok(Self { perm, seed: None })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            perm: (0..k).collect(),
            seed: None,
        }
    }

    pub fn random(k: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng::seeded(seed));
        Self { perm, seed: Some(seed) }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            inv[old] = new;
        }
        Self { perm: inv, seed: None }
    }

    /// `out[c] = v[perm[c]]`.
    pub fn apply<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| v[p]).collect()
    }
}

/// Reorders the factor columns of both matrices by the same permutation: new
/// column `c` is old column `perm[c]`. The dot-product model is unchanged.
pub fn permute_factors<T: Scalar>(pair: &EmbeddingPair<T>, perm: &FactorPermutation) -> Result<EmbeddingPair<T>> {
    if perm.len() != pair.k() {
        return Err(Error::InvalidPermutation(format!(
            "permutation over {} positions applied to K = {}",
            perm.len(),
            pair.k()
        )));
    }
    // re-validate: a deserialized permutation bypasses `new`
    FactorPermutation::new(perm.perm.clone())?;
    Ok(EmbeddingPair {
        users: pair.users.select_columns(perm.as_slice()),
        items: pair.items.select_columns(perm.as_slice()),
    })
}

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

/// Binary layout: `EMB1`, then M, N, K as u64 LE, then the user matrix and
/// the item matrix, each row-major f64 LE.
pub fn write_embeddings<T: Scalar>(out: &mut impl Write, pair: &EmbeddingPair<T>) -> Result<()> {
    out.write_all(EMBEDDING_MAGIC)?;
    for dim in [pair.n_users(), pair.n_items(), pair.k()] {
        out.write_all(&(dim as u64).to_le_bytes())?;
    }
    for v in pair.users.as_slice().iter().chain(pair.items.as_slice()) {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64s(input: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    input.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_embeddings<T: Scalar>(input: &mut impl Read) -> Result<EmbeddingPair<T>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected EMB1")));
    }
    let m = read_u64(input)? as usize;
    let n = read_u64(input)? as usize;
    let k = read_u64(input)? as usize;
    let users = read_f64s(input, m * k)?;
    let items = read_f64s(input, n * k)?;
    EmbeddingPair::new(
        Matrix::from_vec(m, k, users.into_iter().map(T::lit).collect()),
        Matrix::from_vec(n, k, items.into_iter().map(T::lit).collect()),
    )
}

pub fn save_embeddings<T: Scalar>(path: &Path, pair: &EmbeddingPair<T>) -> Result<()> {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, pair)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_embeddings<T: Scalar>(path: &Path) -> Result<EmbeddingPair<T>> {
    let bytes = fs::read(path)?;
    read_embeddings(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot_prediction(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(dot_prediction(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            dot_prediction(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(dot_prediction(&[1.5f32, 2.0], &[2.0, 0.25]).unwrap(), 3.5f32);
    }

    #[test]
    fn dot_equals_trace_k16() {
        let pair = EmbeddingPair::<f64>::random(1, 1, 16, 1.0, 3);
        let map = pair.interaction_map(0, 0);
        assert!((map.trace() - pair.predict(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn outer_examples() {
        let m = outer_product(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(m.cells(), &[0.0, 1.0, 0.0, 0.0]);
        let ones = outer_product(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(ones.cells(), &[1.0; 4]);
    }

    #[test]
    fn outer_matches_nested_loops() {
        let pair = EmbeddingPair::<f64>::random(1, 1, 4, 1.0, 8);
        let (p, q) = (pair.user(0), pair.item(0));
        let map = outer_product(p, q).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(map.get(x, y), p[x] * q[y]);
            }
        }
    }

    #[test]
    fn mask_examples() {
        let e = InteractionMap::from_cells(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(apply_mask(&e, MaskMode::ElementWise).cells(), &[1.0, 0.0, 0.0, 4.0]);
        assert_eq!(apply_mask(&e, MaskMode::Correlations).cells(), &[0.0, 2.0, 3.0, 0.0]);
        let full = apply_mask(&e, MaskMode::Full);
        let bits = |m: &InteractionMap<f64>| m.cells().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&full), bits(&e));
    }

    #[test]
    fn mask_mode_parsing() {
        assert_eq!("element-wise".parse::<MaskMode>().unwrap(), MaskMode::ElementWise);
        assert_eq!("Correlations".parse::<MaskMode>().unwrap(), MaskMode::Correlations);
        assert!("diag2".parse::<MaskMode>().is_err());
    }

    #[test]
    fn identity_permutation_is_noop() {
        let pair = EmbeddingPair::<f64>::random(3, 4, 5, 1.0, 1);
        let same = permute_factors(&pair, &FactorPermutation::identity(5)).unwrap();
        assert_eq!(same, pair);
    }

    #[test]
    fn swap_keeps_predictions() {
        let pair = EmbeddingPair::<f64>::random(3, 4, 2, 1.0, 2);
        let swapped = permute_factors(&pair, &FactorPermutation::new(vec![1, 0]).unwrap()).unwrap();
        for u in 0..3 {
            for i in 0..4 {
                assert_eq!(pair.predict(u, i), swapped.predict(u, i));
            }
        }
    }

    #[test]
    fn permuted_map_is_doubly_permuted() {
        let pair = EmbeddingPair::<f64>::random(2, 2, 8, 1.0, 5);
        let perm = FactorPermutation::random(8, 77);
        let permuted = permute_factors(&pair, &perm).unwrap();
        let original = pair.interaction_map(1, 0);
        let remapped = permuted.interaction_map(1, 0);
        let p = perm.as_slice();
        for x in 0..8 {
            for y in 0..8 {
                assert_eq!(remapped.get(x, y), original.get(p[x], p[y]));
            }
        }
    }

    #[test]
    fn invalid_permutations() {
        assert!(FactorPermutation::new(vec![0, 0]).is_err());
        assert!(FactorPermutation::new(vec![0, 2]).is_err());
        let pair = EmbeddingPair::<f64>::random(1, 1, 3, 1.0, 0);
        assert!(permute_factors(&pair, &FactorPermutation::identity(2)).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let perm = FactorPermutation::random(10, 4);
        let v: Vec<usize> = (0..10).collect();
        assert_eq!(perm.inverse().apply(&perm.apply(&v)), v);
    }

    #[test]
    fn checkpoint_layout() {
        let pair = EmbeddingPair::<f64>::random(2, 3, 2, 1.0, 6);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &pair).unwrap();
        assert_eq!(&buf[..4], b"EMB1");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(buf[20..28].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 28 + (2 * 2 + 3 * 2) * 8);
        let first = f64::from_le_bytes(buf[28..36].try_into().unwrap());
        assert_eq!(first, pair.user(0)[0]);
        let back: EmbeddingPair<f64> = read_embeddings(&mut buf.as_slice()).unwrap();
        assert_eq!(back, pair);
        buf[0] = b'X';
        assert!(read_embeddings::<f64>(&mut buf.as_slice()).is_err());
    }
}
