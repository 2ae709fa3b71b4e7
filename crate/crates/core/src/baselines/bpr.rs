//! Matrix factorization trained with the BPR pairwise loss. Also used to
//! pretrain embeddings for the convolutional model.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataio::InteractionMatrix;
use crate::embed::{dot_prediction, EmbeddingPair};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BprConfig {
    pub factors: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for BprConfig {
    fn default() -> Self {
        Self {
            factors: 32,
            learning_rate: 0.05,
            reg: 1e-4,
            epochs: 30,
            seed: 0,
            init_scale: 0.01,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow for large `|x|`.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sq_norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum()
}

/// Per-triple objective `ln sigmoid(x_ui - x_uj) - reg (|p_u|^2 + |q_i|^2 + |q_j|^2)`.
pub fn bpr_objective<T: Scalar>(pair: &EmbeddingPair<T>, u: usize, i: usize, j: usize, reg: f64) -> f64 {
    let diff = pair.predict(u, i).as_f64() - pair.predict(u, j).as_f64();
    log_sigmoid(diff) - reg * (sq_norm(pair.user(u)) + sq_norm(pair.item(i)) + sq_norm(pair.item(j)))
}

/// One stochastic gradient ascent step on [`bpr_objective`] for the triple
/// `(u, i, j)`. Returns the objective value before the step.
pub fn bpr_step<T: Scalar>(pair: &mut EmbeddingPair<T>, u: usize, i: usize, j: usize, lr: f64, reg: f64) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("positive and negative item coincide"));
    }
    let before = bpr_objective(pair, u, i, j, reg);
    let diff = dot_prediction(pair.user(u), pair.item(i))?.as_f64() - dot_prediction(pair.user(u), pair.item(j))?.as_f64();
    let coef = 1.0 - sigmoid(diff);
    let p: Vec<f64> = pair.user(u).iter().map(|v| v.as_f64()).collect();
    let qi: Vec<f64> = pair.item(i).iter().map(|v| v.as_f64()).collect();
    let qj: Vec<f64> = pair.item(j).iter().map(|v| v.as_f64()).collect();
    for (k, x) in pair.user_mut(u).iter_mut().enumerate() {
        *x = T::lit(p[k] + lr * (coef * (qi[k] - qj[k]) - 2.0 * reg * p[k]));
    }
    for (k, x) in pair.item_mut(i).iter_mut().enumerate() {
        *x = T::lit(qi[k] + lr * (coef * p[k] - 2.0 * reg * qi[k]));
    }
    for (k, x) in pair.item_mut(j).iter_mut().enumerate() {
        *x = T::lit(qj[k] + lr * (-coef * p[k] - 2.0 * reg * qj[k]));
    }
    Ok(before)
}

/// Uniform negative among the items `user` has not interacted with, or
/// `None` when the user has seen the whole catalog.
pub(crate) fn sample_negative(train: &InteractionMatrix, user: usize, r: &mut rng::Rng) -> Option<usize> {
    let n = train.n_items();
    let seen = train.user_degree(user);
    if seen >= n {
        return None;
    }
    if seen * 2 <= n {
        loop {
            let j = r.random_range(0..n);
            if !train.contains(user, j) {
                return Some(j);
            }
        }
    }
    let mut pick = r.random_range(0..n - seen);
    for j in 0..n {
        if !train.contains(user, j) {
            if pick == 0 {
                return Some(j);
            }
            pick -= 1;
        }
    }
    unreachable!("fewer unseen items than counted")
}

/// SGD over `(user, positive, negative)` triples; each epoch draws as many
/// triples as there are training interactions.
pub fn fit_mf_bpr(train: &InteractionMatrix, cfg: &BprConfig) -> Result<EmbeddingPair<f64>> {
    if cfg.factors == 0 {
        return Err(Error::invalid("factors must be at least 1"));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.reg >= 0.0) {
        return Err(Error::invalid("learning rate and reg must be non-negative"));
    }
    let mut pair = EmbeddingPair::<f64>::random(train.n_users(), train.n_items(), cfg.factors, cfg.init_scale, cfg.seed);
    let entries = train.entries();
    if entries.is_empty() {
        return Ok(pair);
    }
    let mut r = rng::seeded(rng::derive(cfg.seed, 1));
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for _ in 0..entries.len() {
            let e = &entries[r.random_range(0..entries.len())];
            let Some(j) = sample_negative(train, e.user, &mut r) else {
                continue;
            };
            total += bpr_step(&mut pair, e.user, e.item, j, cfg.learning_rate, cfg.reg)?;
        }
        if !total.is_finite()
            || pair.users().as_slice().iter().chain(pair.items().as_slice()).any(|v| !v.is_finite())
        {
            return Err(Error::Diverged {
                epoch,
                learning_rate: cfg.learning_rate,
                detail: "MF-BPR parameters became non-finite".into(),
            });
        }
        log::debug!("mf-bpr epoch {epoch}: mean objective {}", total / entries.len() as f64);
    }
    Ok(pair)
}
