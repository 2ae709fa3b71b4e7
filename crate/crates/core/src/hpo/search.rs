use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gp::{expected_improvement, GaussianProcess};
use super::space::{Configuration, HyperparameterSpace};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Bayesian,
    /// Every call sampled uniformly; a baseline for the tuner itself.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    pub n_calls: usize,
    pub n_random_init: usize,
    pub seed: u64,
    pub strategy: Strategy,
    /// Random candidates scored by the acquisition function per proposal.
    pub n_candidates: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_calls: 50,
            n_random_init: 15,
            seed: 0,
            strategy: Strategy::Bayesian,
            n_candidates: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    RandomInit,
    ModelBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: Configuration,
    /// `None` when the objective failed or returned a non-finite value; such
    /// trials count as the worst observed value.
    pub value: Option<f64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub trials: Vec<Trial>,
    pub best_index: Option<usize>,
    pub seed: u64,
    pub strategy: Strategy,
}

impl SearchTrace {
    pub fn best(&self) -> Option<&Trial> {
        self.best_index.map(|i| &self.trials[i])
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best().and_then(|t| t.value)
    }

    pub fn to_csv(&self) -> String {
        let mut names: Vec<&String> = self.trials.iter().flat_map(|t| t.config.keys()).collect();
        names.sort();
        names.dedup();
        let mut out = String::from("trial,phase,value");
        for n in &names {
            write!(out, ",{n}").unwrap();
        }
        out.push('\n');
        for (i, t) in self.trials.iter().enumerate() {
            let phase = match t.phase {
                Phase::RandomInit => "random_init",
                Phase::ModelBased => "model_based",
            };
            let value = t.value.map_or_else(|| "failed".to_string(), |v| v.to_string());
            write!(out, "{i},{phase},{value}").unwrap();
            for n in &names {
                let cell = t.config.get(*n).map_or_else(String::new, |v| v.to_string());
                write!(out, ",{cell}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Proposes the candidate with the highest expected improvement. Candidates
/// are uniform samples plus Gaussian perturbations of the best points, each
/// snapped onto the space through decode/encode.
fn propose(space: &HyperparameterSpace, trials: &[Trial], encoded: &[Vec<f64>], r: &mut rng::Rng, n_candidates: usize) -> Configuration {
    let worst = trials
        .iter()
        .filter_map(|t| t.value)
        .fold(f64::INFINITY, f64::min);
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let y: Vec<f64> = trials.iter().map(|t| t.value.unwrap_or(worst)).collect();
    let Some(gp) = GaussianProcess::fit(encoded, &y) else {
        return space.sample(r);
    };
    let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut candidates: Vec<Configuration> = (0..n_candidates).map(|_| space.sample(r)).collect();
    let mut ranked: Vec<usize> = (0..y.len()).collect();
    ranked.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let jitter = Normal::new(0.0, 0.05).expect("valid sd");
    for &i in ranked.iter().take(5) {
        for _ in 0..n_candidates / 10 {
            let x: Vec<f64> = encoded[i].iter().map(|v| (v + jitter.sample(r)).clamp(0.0, 1.0)).collect();
            candidates.push(space.decode(&x));
        }
    }
    let mut chosen = 0;
    let mut chosen_ei = f64::NEG_INFINITY;
    for (c, config) in candidates.iter().enumerate() {
        let x = space.encode(config).expect("decoded configurations encode");
        let (m, s) = gp.predict(&x);
        let ei = expected_improvement(m, s, best, 0.01 * gp_scale(&y));
        if ei > chosen_ei {
            chosen = c;
            chosen_ei = ei;
        }
    }
    candidates.swap_remove(chosen)
}

fn gp_scale(y: &[f64]) -> f64 {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

/// Maximizes `objective` over `space`: `n_random_init` uniform draws, then
/// GP/expected-improvement proposals up to `n_calls` evaluations. An empty
/// space has a single configuration and is evaluated once.
pub fn bayesian_search(
    space: &HyperparameterSpace,
    mut objective: impl FnMut(&Configuration) -> Result<f64>,
    opts: &SearchOptions,
) -> Result<SearchTrace> {
    space.validate()?;
    if opts.n_calls == 0 {
        return Err(Error::invalid("n_calls must be at least 1"));
    }
    let n_calls = if space.is_empty() { 1 } else { opts.n_calls };
    let n_random = match opts.strategy {
        Strategy::Bayesian => opts.n_random_init.clamp(1, n_calls),
        Strategy::Random => n_calls,
    };
    let mut r = rng::seeded(opts.seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(n_calls);
    let mut encoded: Vec<Vec<f64>> = Vec::with_capacity(n_calls);
    let mut best_index: Option<usize> = None;
    for call in 0..n_calls {
        let (config, phase) = if call < n_random {
            (space.sample(&mut r), Phase::RandomInit)
        } else {
            (propose(space, &trials, &encoded, &mut r, opts.n_candidates.max(10)), Phase::ModelBased)
        };
        let value = match objective(&config) {
            Ok(v) => finite(v),
            Err(e) => {
                log::warn!("trial {call} failed: {e}");
                None
            }
        };
        if let Some(v) = value {
            if best_index.and_then(|b| trials[b].value).is_none_or(|b| v > b) {
                best_index = Some(call);
            }
        }
        log::info!("trial {call} ({phase:?}): {value:?}");
        encoded.push(space.encode(&config)?);
        trials.push(Trial { config, value, phase });
    }
    Ok(SearchTrace {
        trials,
        best_index,
        seed: opts.seed,
        strategy: opts.strategy,
    })
}
