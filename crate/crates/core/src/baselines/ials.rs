//! Implicit-feedback ALS with linear confidence weighting.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataio::InteractionMatrix;
use crate::embed::EmbeddingPair;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IalsConfig {
    pub factors: usize,
    /// `c_ui = 1 + confidence_alpha * r_ui`.
    pub confidence_alpha: f64,
    pub reg: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for IalsConfig {
    fn default() -> Self {
        Self {
            factors: 32,
            confidence_alpha: 1.0,
            reg: 1e-3,
            iterations: 15,
            seed: 0,
        }
    }
}

const INIT_SCALE: f64 = 0.01;

fn gram(fixed: &Matrix<f64>) -> DMatrix<f64> {
    let f = fixed.to_nalgebra();
    f.transpose() * f
}

fn solve_with_gram(
    fixed: &Matrix<f64>,
    gram: &DMatrix<f64>,
    observed: &[(usize, f64)],
    confidence_alpha: f64,
    reg: f64,
) -> Result<Vec<f64>> {
    let k = fixed.cols();
    let mut a = gram.clone();
    let mut b = DVector::zeros(k);
    for &(i, r) in observed {
        let y = fixed.row(i);
        let extra = confidence_alpha * r;
        let c = 1.0 + extra;
        for x in 0..k {
            b[x] += c * y[x];
            for z in 0..k {
                a[(x, z)] += extra * y[x] * y[z];
            }
        }
    }
    for x in 0..k {
        a[(x, x)] += reg;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{k}x{k} system with reg = {reg}")))?;
    Ok(chol.solve(&b).iter().copied().collect())
}

/// Closed-form update of one side's factor given the other side `fixed`:
/// solves `(Y^T C_u Y + reg I) x = Y^T C_u p_u` for the observed `(index, r)`
/// pairs of the row being updated.
pub fn ials_solve_user(fixed: &Matrix<f64>, observed: &[(usize, f64)], confidence_alpha: f64, reg: f64) -> Result<Vec<f64>> {
    solve_with_gram(fixed, &gram(fixed), observed, confidence_alpha, reg)
}

/// Weighted squared loss over every user-item cell plus the L2 penalty.
pub fn ials_objective(train: &InteractionMatrix, pair: &EmbeddingPair<f64>, confidence_alpha: f64, reg: f64) -> f64 {
    let x = pair.users().to_nalgebra();
    let y = pair.items().to_nalgebra();
    // sum over all cells of (x_u . y_i)^2 = trace(X^T X Y^T Y)
    let all_sq = (x.transpose() * &x).component_mul(&(y.transpose() * &y)).sum();
    let mut observed = 0.0;
    for e in train.entries() {
        let s: f64 = pair.user(e.user).iter().zip(pair.item(e.item)).map(|(a, b)| a * b).sum();
        let c = 1.0 + confidence_alpha * e.value;
        observed += c * (1.0 - s) * (1.0 - s) - s * s;
    }
    all_sq + observed + reg * (x.norm_squared() + y.norm_squared())
}

fn sweep(
    target: &mut Matrix<f64>,
    fixed: &Matrix<f64>,
    rows: &[Vec<(usize, f64)>],
    confidence_alpha: f64,
    reg: f64,
) -> Result<()> {
    let g = gram(fixed);
    let solved: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|obs| solve_with_gram(fixed, &g, obs, confidence_alpha, reg))
        .collect::<Result<_>>()?;
    for (r, v) in solved.into_iter().enumerate() {
        target.row_mut(r).copy_from_slice(&v);
    }
    Ok(())
}

/// Alternating least squares. Returns the factors and the objective after
/// each full sweep (users then items).
pub fn fit_ials(train: &InteractionMatrix, cfg: &IalsConfig) -> Result<(EmbeddingPair<f64>, Vec<f64>)> {
    if cfg.factors == 0 {
        return Err(Error::invalid("factors must be at least 1"));
    }
    if !(cfg.reg > 0.0) {
        return Err(Error::Singular(format!("reg = {}", cfg.reg)));
    }
    if !(cfg.confidence_alpha >= 0.0) {
        return Err(Error::invalid("confidence_alpha must be non-negative"));
    }
    let pair = EmbeddingPair::<f64>::random(train.n_users(), train.n_items(), cfg.factors, INIT_SCALE, cfg.seed);
    let mut users = pair.users().clone();
    let mut items = pair.items().clone();
    let by_user: Vec<Vec<(usize, f64)>> = (0..train.n_users())
        .map(|u| train.user_row(u).iter().map(|e| (e.item, e.value)).collect())
        .collect();
    let by_item = train.item_columns();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        sweep(&mut users, &items, &by_user, cfg.confidence_alpha, cfg.reg)?;
        sweep(&mut items, &users, &by_item, cfg.confidence_alpha, cfg.reg)?;
        let current = EmbeddingPair::new(users.clone(), items.clone())?;
        trace.push(ials_objective(train, &current, cfg.confidence_alpha, cfg.reg));
    }
    Ok((EmbeddingPair::new(users, items)?, trace))
}
