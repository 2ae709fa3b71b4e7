use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{Interaction, InteractionMatrix, Partition};
use crate::error::{Error, Result};
use crate::rng;

/// Low-rank implicit-feedback generator.
///
/// Latent vectors have `rank` coordinates with pairwise correlation
/// `correlation` (a shared Gaussian component). Item `i` also gets a
/// popularity bias `-popularity_skew * ln(1 + r_i)` for a random popularity
/// rank `r_i`. Each user keeps the `per_user` items with the highest
/// `<u, v> / sqrt(rank) + bias + temperature * Gumbel` utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub rank: usize,
    pub per_user: usize,
    pub correlation: f64,
    pub popularity_skew: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 500,
            rank: 8,
            per_user: 20,
            correlation: 0.3,
            popularity_skew: 0.5,
            temperature: 0.5,
            seed: 0,
        }
    }
}

fn latent(r: &mut rng::Rng, rank: usize, correlation: f64) -> Vec<f64> {
    let shared: f64 = StandardNormal.sample(r);
    let a = (1.0 - correlation).sqrt();
    let b = correlation.sqrt();
    (0..rank)
        .map(|_| {
            let z: f64 = StandardNormal.sample(r);
            a * z + b * shared
        })
        .collect()
}

pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<InteractionMatrix> {
    if cfg.n_users == 0 || cfg.n_items == 0 || cfg.rank == 0 {
        return Err(Error::invalid("synthetic data needs users, items and rank >= 1"));
    }
    if cfg.per_user == 0 || cfg.per_user >= cfg.n_items {
        return Err(Error::invalid(format!(
            "per_user must lie in 1..{}, got {}",
            cfg.n_items, cfg.per_user
        )));
    }
    if !(0.0..1.0).contains(&cfg.correlation) {
        return Err(Error::invalid(format!("correlation must lie in [0, 1), got {}", cfg.correlation)));
    }
    if !(cfg.temperature >= 0.0 && cfg.popularity_skew.is_finite()) {
        return Err(Error::invalid("temperature must be non-negative and popularity_skew finite"));
    }
    let mut r = rng::seeded(cfg.seed);
    let users: Vec<Vec<f64>> = (0..cfg.n_users).map(|_| latent(&mut r, cfg.rank, cfg.correlation)).collect();
    let items: Vec<Vec<f64>> = (0..cfg.n_items).map(|_| latent(&mut r, cfg.rank, cfg.correlation)).collect();
    let mut pop_rank: Vec<usize> = (0..cfg.n_items).collect();
    pop_rank.shuffle(&mut r);
    let bias: Vec<f64> = pop_rank
        .iter()
        .map(|&p| -cfg.popularity_skew * (1.0 + p as f64).ln())
        .collect();
    let scale = 1.0 / (cfg.rank as f64).sqrt();
    let mut entries = Vec::with_capacity(cfg.n_users * cfg.per_user);
    for (u, pu) in users.iter().enumerate() {
        let mut utility: Vec<(f64, usize)> = items
            .iter()
            .enumerate()
            .map(|(i, qi)| {
                let dot: f64 = pu.iter().zip(qi).map(|(a, b)| a * b).sum();
                let g: f64 = r.random_range(f64::MIN_POSITIVE..1.0);
                (dot * scale + bias[i] - cfg.temperature * (-g.ln()).ln(), i)
            })
            .collect();
        utility.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        entries.extend(utility[..cfg.per_user].iter().map(|&(_, i)| Interaction::new(u, i)));
    }
    InteractionMatrix::from_entries(cfg.n_users, cfg.n_items, entries, Partition::Full)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig {
            n_users: 50,
            n_items: 40,
            per_user: 6,
            ..SyntheticConfig::default()
        };
        let a = synthetic_dataset(&cfg).unwrap();
        assert_eq!(a.nnz(), 300);
        assert!((0..50).all(|u| a.user_degree(u) == 6));
        assert_eq!(a, synthetic_dataset(&cfg).unwrap());
        let b = synthetic_dataset(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn skew_concentrates_popularity() {
        let base = SyntheticConfig {
            n_users: 200,
            n_items: 100,
            per_user: 10,
            ..SyntheticConfig::default()
        };
        let top_share = |skew: f64| {
            let m = synthetic_dataset(&SyntheticConfig {
                popularity_skew: skew,
                ..base.clone()
            })
            .unwrap();
            let mut c = m.item_counts();
            c.sort_unstable_by(|a, b| b.cmp(a));
            c[..10].iter().sum::<usize>() as f64 / m.nnz() as f64
        };
        assert!(top_share(2.0) > top_share(0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        for cfg in [
            SyntheticConfig { per_user: 500, ..SyntheticConfig::default() },
            SyntheticConfig { correlation: 1.0, ..SyntheticConfig::default() },
            SyntheticConfig { rank: 0, ..SyntheticConfig::default() },
        ] {
            assert!(synthetic_dataset(&cfg).is_err());
        }
    }
}
