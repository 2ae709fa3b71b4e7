use serde::{Deserialize, Serialize};

use super::search::{bayesian_search, SearchOptions, SearchTrace};
use super::space::{Configuration, HyperparameterSpace};
use crate::baselines::{Algorithm, FittedModel};
use crate::dataio::{Partition, SplitTriple};
use crate::error::{Error, Result};
use crate::eval::{evaluate_loo, EvalOptions, EvalTarget, EvaluationResult, Metric};

/// Outcome of tuning on validation and refitting on train + validation.
#[derive(Debug, Clone)]
pub struct TunedModel {
    pub model: FittedModel,
    pub trace: SearchTrace,
    pub best_config: Configuration,
    pub validation_value: f64,
    pub test: EvaluationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub best_config: Configuration,
    pub validation_value: f64,
    pub n_trials: usize,
    pub n_failed: usize,
    pub seed: u64,
}

impl TunedModel {
    pub fn summary(&self, metric: Metric) -> TuneSummary {
        TuneSummary {
            algorithm: self.model.algorithm,
            metric,
            best_config: self.best_config.clone(),
            validation_value: self.validation_value,
            n_trials: self.trace.trials.len(),
            n_failed: self.trace.trials.iter().filter(|t| t.value.is_none()).count(),
            seed: self.trace.seed,
        }
    }
}

/// Tunes `algorithm` on the validation partition (models fitted on train
/// only), refits the best configuration on train + validation and evaluates
/// it on test. `eval` supplies sampling, cutoffs and seed; its target is
/// overridden per phase.
pub fn tune_and_retrain(
    algorithm: Algorithm,
    space: &HyperparameterSpace,
    split: &SplitTriple,
    metric: Metric,
    search: &SearchOptions,
    eval: &EvalOptions,
) -> Result<TunedModel> {
    if split.validation.nnz() == 0 {
        return Err(Error::invalid("tuning needs a non-empty validation partition"));
    }
    if split.train.partition() != Partition::Train {
        return Err(Error::Leakage(format!("tuning expects a train partition, got {:?}", split.train.partition())));
    }
    let mut cutoffs = eval.cutoffs.clone();
    if !cutoffs.contains(&metric.cutoff) {
        cutoffs.push(metric.cutoff);
        cutoffs.sort_unstable();
    }
    let val_opts = EvalOptions {
        target: EvalTarget::Validation,
        cutoffs: cutoffs.clone(),
        ..eval.clone()
    };
    let trace = bayesian_search(
        space,
        |config| {
            let model = algorithm.fit(&split.train, config, search.seed)?;
            evaluate_loo(&model, split, &val_opts)?.metric(metric)
        },
        search,
    )?;
    let best = trace
        .best()
        .ok_or_else(|| Error::invalid(format!("every {algorithm} trial failed")))?;
    let best_config = best.config.clone();
    let validation_value = best.value.expect("best trial has a value");
    let model = algorithm.fit(&split.train_validation(), &best_config, search.seed)?;
    let test = evaluate_loo(
        &model,
        split,
        &EvalOptions {
            target: EvalTarget::Test,
            cutoffs,
            ..eval.clone()
        },
    )?;
    Ok(TunedModel {
        model,
        trace,
        best_config,
        validation_value,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{leave_one_out_split, Interaction, InteractionMatrix, SplitPolicy};
    use crate::hpo::{Dimension, ParamValue};

    fn dataset() -> SplitTriple {
        // two disjoint communities; every user sees 5 of their community's 8 items
        let mut entries = Vec::new();
        for u in 0..40 {
            let base = if u < 20 { 0 } else { 8 };
            for k in 0..5 {
                entries.push(Interaction::new(u, base + (u + 3 * k) % 8));
            }
        }
        let m = InteractionMatrix::from_entries(40, 16, entries, Partition::Full).unwrap();
        leave_one_out_split(&m, SplitPolicy::Random, 3).unwrap()
    }

    #[test]
    fn single_call_budget() {
        let split = dataset();
        let search = SearchOptions {
            n_calls: 1,
            ..SearchOptions::default()
        };
        let eval = EvalOptions {
            sampling: crate::eval::NegativeSampling::Sampled(5),
            ..EvalOptions::default()
        };
        let space = Algorithm::ItemKnn.default_space();
        let a = tune_and_retrain(Algorithm::ItemKnn, &space, &split, Metric::ndcg(10), &search, &eval).unwrap();
        assert_eq!(a.trace.trials.len(), 1);
        assert_eq!(a.model.profiles.as_ref().unwrap().partition(), Partition::TrainValidation);
        let b = tune_and_retrain(Algorithm::ItemKnn, &space, &split, Metric::ndcg(10), &search, &eval).unwrap();
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn selects_a_shrink_that_beats_rare_items() {
        // Item 0 is every evaluated user's profile. Ten rare items each co-occur
        // with it once, while popular item 1 co-occurs five times but is also
        // held by a hundred other users. Without shrinkage the rare items have
        // the higher cosine; any shrink of 8 or more ranks item 1 first.
        let (m, n) = (135, 40);
        let mut train = Vec::new();
        for u in 0..10 {
            train.push(Interaction::new(u, 0));
            train.push(Interaction::new(u, 2 + u));
        }
        for u in 10..110 {
            train.push(Interaction::new(u, 1));
            train.push(Interaction::new(u, 12 + u % 28));
        }
        for u in 110..115 {
            train.push(Interaction::new(u, 0));
            train.push(Interaction::new(u, 1));
        }
        let mut validation = Vec::new();
        let mut test = Vec::new();
        for u in 115..135 {
            train.push(Interaction::new(u, 0));
            validation.push(Interaction::new(u, 1));
            test.push(Interaction::new(u, 12 + u % 28));
        }
        let split = SplitTriple {
            train: InteractionMatrix::from_entries(m, n, train, Partition::Train).unwrap(),
            validation: InteractionMatrix::from_entries(m, n, validation, Partition::Validation).unwrap(),
            test: InteractionMatrix::from_entries(m, n, test, Partition::Test).unwrap(),
            seed: 0,
            policy: SplitPolicy::Random,
            cold_users: 0,
        };
        let space = HyperparameterSpace::new().with("shrink", Dimension::integer(0, 20));
        let search = SearchOptions {
            n_calls: 10,
            n_random_init: 4,
            seed: 1,
            ..SearchOptions::default()
        };
        let eval = EvalOptions {
            sampling: crate::eval::NegativeSampling::AllItems,
            ..EvalOptions::default()
        };
        let tuned = tune_and_retrain(Algorithm::ItemKnn, &space, &split, Metric::hr(5), &search, &eval).unwrap();
        let ParamValue::Int(shrink) = tuned.best_config["shrink"] else {
            panic!("integer dimension");
        };
        assert!(shrink >= 8, "selected shrink {shrink}");
        assert_eq!(tuned.validation_value, 1.0);
        // shrink 0 really is worse on this data
        let mut zero = Configuration::new();
        zero.insert("shrink".into(), ParamValue::Int(0));
        let model = Algorithm::ItemKnn.fit(&split.train, &zero, 0).unwrap();
        let opts = EvalOptions {
            target: EvalTarget::Validation,
            ..eval
        };
        assert_eq!(evaluate_loo(&model, &split, &opts).unwrap().metric(Metric::hr(5)).unwrap(), 0.0);
    }
}
