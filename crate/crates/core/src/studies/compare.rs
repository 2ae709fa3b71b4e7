use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{RunRecord, StudyKind, StudyReport};
use crate::baselines::Algorithm;
use crate::dataio::SplitTriple;
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, Metric};
use crate::hpo::{tune_and_retrain, HyperparameterSpace, SearchOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonConfig {
    pub algorithms: Vec<Algorithm>,
    /// Per-algorithm overrides of the default search spaces, keyed by
    /// algorithm name.
    pub spaces: BTreeMap<String, HyperparameterSpace>,
    /// Validation metric being tuned.
    pub metric: Metric,
    pub cutoffs: Vec<usize>,
    pub search: SearchOptions,
    pub eval: EvalOptions,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            spaces: BTreeMap::new(),
            metric: Metric::ndcg(10),
            cutoffs: vec![1, 5, 10],
            search: SearchOptions::default(),
            eval: EvalOptions::default(),
        }
    }
}

/// Tunes every algorithm on validation, refits on train + validation and
/// tabulates test HR and NDCG per cutoff. TopPopular is always included. A
/// failing algorithm becomes a failed row.
pub fn run_baseline_comparison(split: &SplitTriple, cfg: &ComparisonConfig) -> Result<StudyReport> {
    if cfg.cutoffs.is_empty() {
        return Err(Error::invalid("at least one cutoff is needed"));
    }
    for name in cfg.spaces.keys() {
        name.parse::<Algorithm>()?;
    }
    let mut algorithms = cfg.algorithms.clone();
    if !algorithms.contains(&Algorithm::TopPopular) {
        algorithms.insert(0, Algorithm::TopPopular);
    }
    let mut cutoffs = cfg.cutoffs.clone();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let mut metrics: Vec<String> = cutoffs.iter().map(|&c| Metric::hr(c).to_string()).collect();
    metrics.extend(cutoffs.iter().map(|&c| Metric::ndcg(c).to_string()));
    let mut report = StudyReport::new(
        StudyKind::BaselineComparison,
        serde_json::json!({ "study": cfg, "n_users": split.n_users(), "n_items": split.n_items(), "split_seed": split.seed }),
        algorithms.iter().map(|a| a.label().to_string()).collect(),
        metrics,
    );
    report.seeds = vec![cfg.search.seed, cfg.eval.seed];
    let eval = EvalOptions {
        cutoffs: cutoffs.clone(),
        ..cfg.eval.clone()
    };
    for (run, &alg) in algorithms.iter().enumerate() {
        let space = cfg.spaces.get(alg.name()).cloned().unwrap_or_else(|| alg.default_space());
        let outcome = tune_and_retrain(alg, &space, split, cfg.metric, &cfg.search, &eval);
        let (metrics, failure) = match outcome {
            Ok(tuned) => {
                let mut m = BTreeMap::new();
                for &c in &cutoffs {
                    for metric in [Metric::hr(c), Metric::ndcg(c)] {
                        m.insert(metric.to_string(), tuned.test.metric(metric)?);
                    }
                }
                report.notes.push(format!(
                    "{}: best validation {} = {:.4} with {}",
                    alg.label(),
                    cfg.metric,
                    tuned.validation_value,
                    serde_json::to_string(&tuned.best_config)?
                ));
                (m, None)
            }
            Err(e) => {
                log::warn!("{alg} failed: {e}");
                (BTreeMap::new(), Some(e.to_string()))
            }
        };
        report.runs.push(RunRecord {
            run,
            seed: cfg.search.seed,
            variant: alg.label().to_string(),
            metrics,
            failure,
        });
    }
    report.summarize();
    Ok(report)
}
