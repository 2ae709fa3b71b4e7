//! SLIM with elastic-net regularization, fitted one target column at a time
//! by cyclic coordinate descent.

use rayon::prelude::*;

use super::knn::{top_k_of, SimilarityMatrix};
use crate::dataio::InteractionMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlimConfig {
    pub l1: f64,
    pub l2: f64,
    pub top_k: usize,
    pub max_iter: usize,
    /// Stop once no coordinate moves by more than this in a full sweep.
    pub tol: f64,
}

impl Default for SlimConfig {
    fn default() -> Self {
        Self {
            l1: 1e-3,
            l2: 1e-1,
            top_k: 100,
            max_iter: 200,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlimColumn {
    /// Sparse non-negative weights `(source item, weight)`; never contains the target.
    pub weights: Vec<(usize, f64)>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Elastic-net objective for one column:
/// `0.5 |y - X w|^2 + l1 sum(w) + 0.5 l2 |w|^2` with `y` the target column.
pub fn slim_objective(train: &InteractionMatrix, target: usize, weights: &[f64], l1: f64, l2: f64) -> f64 {
    let mut residual = vec![0.0; train.n_users()];
    for e in train.entries() {
        if e.item == target {
            residual[e.user] += e.value;
        }
        residual[e.user] -= e.value * weights[e.item];
    }
    let fit: f64 = residual.iter().map(|r| r * r).sum::<f64>() * 0.5;
    let l1_term: f64 = weights.iter().map(|w| w.abs()).sum::<f64>() * l1;
    let l2_term: f64 = weights.iter().map(|w| w * w).sum::<f64>() * 0.5 * l2;
    fit + l1_term + l2_term
}

fn fit_column(
    columns: &[Vec<(usize, f64)>],
    sq_norms: &[f64],
    user_rows: &[Vec<(usize, f64)>],
    n_users: usize,
    target: usize,
    cfg: &SlimConfig,
) -> SlimColumn {
    // With non-negative data, items that never co-occur with the target get a
    // non-positive coordinate gradient at every iterate and stay at zero.
    let mut candidates: Vec<usize> = columns[target]
        .iter()
        .flat_map(|&(u, _)| user_rows[u].iter().map(|&(i, _)| i))
        .filter(|&i| i != target && sq_norms[i] > 0.0)
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    let mut residual = vec![0.0; n_users];
    for &(u, v) in &columns[target] {
        residual[u] = v;
    }
    let mut w = vec![0.0; candidates.len()];
    let mut converged = candidates.is_empty();
    let mut sweeps = 0;
    while !converged && sweeps < cfg.max_iter {
        sweeps += 1;
        let mut max_step: f64 = 0.0;
        for (slot, &k) in candidates.iter().enumerate() {
            let rho: f64 = columns[k].iter().map(|&(u, x)| x * residual[u]).sum::<f64>() + sq_norms[k] * w[slot];
            let updated = ((rho - cfg.l1).max(0.0)) / (sq_norms[k] + cfg.l2);
            let delta = updated - w[slot];
            if delta != 0.0 {
                for &(u, x) in &columns[k] {
                    residual[u] -= delta * x;
                }
                w[slot] = updated;
                max_step = max_step.max(delta.abs());
            }
        }
        converged = max_step <= cfg.tol;
    }
    let weights = top_k_of(candidates.into_iter().zip(w), cfg.top_k);
    SlimColumn {
        weights,
        converged,
        sweeps,
    }
}

fn validate(cfg: &SlimConfig) -> Result<()> {
    if !(cfg.l1 >= 0.0 && cfg.l2 >= 0.0) {
        return Err(Error::invalid("SLIM penalties must be non-negative"));
    }
    if cfg.top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    Ok(())
}

struct Views {
    columns: Vec<Vec<(usize, f64)>>,
    sq_norms: Vec<f64>,
    user_rows: Vec<Vec<(usize, f64)>>,
}

fn views(train: &InteractionMatrix) -> Views {
    let columns = train.item_columns();
    let sq_norms = columns.iter().map(|c| c.iter().map(|&(_, x)| x * x).sum()).collect();
    let user_rows = (0..train.n_users())
        .map(|u| train.user_row(u).iter().map(|e| (e.item, e.value)).collect())
        .collect();
    Views {
        columns,
        sq_norms,
        user_rows,
    }
}

/// Non-negative elastic-net regression of `target_item`'s column on every
/// other column, with zero self-weight and `top_k` retained weights. A column
/// that exhausts `max_iter` is returned as-is with `converged == false`.
pub fn slim_fit_column(train: &InteractionMatrix, target_item: usize, cfg: &SlimConfig) -> Result<SlimColumn> {
    validate(cfg)?;
    if target_item >= train.n_items() {
        return Err(Error::invalid(format!("item {target_item} outside catalog")));
    }
    let v = views(train);
    Ok(fit_column(&v.columns, &v.sq_norms, &v.user_rows, train.n_users(), target_item, cfg))
}

/// Fits every column independently and assembles the item x item weight
/// matrix `W` (row = source item, column = target item).
pub fn fit_slim(train: &InteractionMatrix, cfg: &SlimConfig) -> Result<SimilarityMatrix> {
    validate(cfg)?;
    let v = views(train);
    let cols: Vec<SlimColumn> = (0..train.n_items())
        .into_par_iter()
        .map(|j| fit_column(&v.columns, &v.sq_norms, &v.user_rows, train.n_users(), j, cfg))
        .collect();
    let unconverged = cols.iter().filter(|c| !c.converged).count();
    if unconverged > 0 {
        log::warn!("SLIM: {unconverged} column(s) hit max_iter = {} before converging", cfg.max_iter);
    }
    let by_target = SimilarityMatrix::from_rows(train.n_items(), cols.into_iter().map(|c| c.weights).collect())?;
    Ok(by_target.transpose())
}
