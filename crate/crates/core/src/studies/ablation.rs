use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RunRecord, StudyKind, StudyReport};
use crate::baselines::{fit_mf_bpr, BprConfig, DotModel, ScoringModel};
use crate::convrec::{train, validation_metric, ConvRecModel, ConvTowerConfig, EmbeddingMode, TrainConfig, TrainTrace};
use crate::dataio::SplitTriple;
use crate::embed::{permute_factors, EmbeddingPair, FactorPermutation, MaskMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate_loo, EvalOptions, EvalTarget, Metric};
use crate::rng;

/// How a convolution model is built and trained inside a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvRecipe {
    /// Channels of the halving 2x2 / stride-2 tower.
    pub channels: usize,
    pub head_width: usize,
    pub init_scale: f64,
    pub mode: EmbeddingMode,
    /// Embedding size and init scale used when no pretrained factors exist.
    pub factors: usize,
    pub embedding_scale: f64,
    pub train: TrainConfig,
    /// Validation metric driving early stopping.
    pub early_stopping: Metric,
}

impl Default for ConvRecipe {
    fn default() -> Self {
        Self {
            channels: 16,
            head_width: 0,
            init_scale: ConvTowerConfig::default().init_scale,
            mode: EmbeddingMode::Frozen,
            factors: 8,
            embedding_scale: 0.1,
            train: TrainConfig::default(),
            early_stopping: Metric::ndcg(10),
        }
    }
}

impl ConvRecipe {
    pub fn build(&self, embeddings: EmbeddingPair<f64>, mask: MaskMode, seed: u64) -> Result<ConvRecModel<f64>> {
        let tower = ConvTowerConfig {
            head_width: self.head_width,
            init_scale: self.init_scale,
            ..ConvTowerConfig::halving(embeddings.k(), self.channels, seed)?
        };
        ConvRecModel::new(embeddings, self.mode, &tower, mask)
    }

    /// Builds and trains a model on `split.train` with early stopping on the
    /// validation partition; `seed` drives tower init and triple sampling.
    pub fn fit(
        &self,
        embeddings: EmbeddingPair<f64>,
        split: &SplitTriple,
        mask: MaskMode,
        seed: u64,
        eval: &EvalOptions,
    ) -> Result<(ConvRecModel<f64>, TrainTrace)> {
        let model = self.build(embeddings, mask, seed)?;
        let cfg = TrainConfig {
            seed,
            ..self.train.clone()
        };
        train(model, &split.train, &cfg, mask, validation_metric(split, self.early_stopping, eval))
    }

    fn embeddings(&self, base: Option<&EmbeddingPair<f64>>, split: &SplitTriple, seed: u64) -> Result<EmbeddingPair<f64>> {
        match base {
            Some(b) => permute_factors(b, &FactorPermutation::random(b.k(), seed)),
            None if self.mode == EmbeddingMode::Frozen => {
                Err(Error::invalid("frozen-embedding studies need pretrained embeddings"))
            }
            None => Ok(EmbeddingPair::random(
                split.n_users(),
                split.n_items(),
                self.factors,
                self.embedding_scale,
                rng::derive(seed, 1),
            )),
        }
    }
}

pub fn pretrain_embeddings(split: &SplitTriple, cfg: &BprConfig) -> Result<EmbeddingPair<f64>> {
    fit_mf_bpr(&split.train, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PermutationConfig {
    pub n_permutations: usize,
    pub cutoff: usize,
    pub seed: u64,
    /// Sampling and negative seed for the test evaluation.
    pub eval: EvalOptions,
    /// Also train a convolution model on each permuted embedding set.
    pub conv: Option<ConvRecipe>,
    /// Run permutations on the rayon pool; results do not depend on it.
    pub parallel: bool,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            n_permutations: 20,
            cutoff: 10,
            seed: 0,
            eval: EvalOptions::default(),
            conv: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub n_repeats: usize,
    pub cutoff: usize,
    pub alpha: f64,
    pub seed: u64,
    pub eval: EvalOptions,
    pub recipe: ConvRecipe,
    pub parallel: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            n_repeats: 20,
            cutoff: 10,
            alpha: 0.05,
            seed: 0,
            eval: EvalOptions::default(),
            recipe: ConvRecipe::default(),
            parallel: true,
        }
    }
}

fn metrics_for(cutoff: usize) -> [Metric; 2] {
    [Metric::hr(cutoff), Metric::ndcg(cutoff)]
}

fn test_options(eval: &EvalOptions, cutoff: usize) -> EvalOptions {
    EvalOptions {
        target: EvalTarget::Test,
        cutoffs: vec![cutoff],
        ..eval.clone()
    }
}

fn validation_options(eval: &EvalOptions, cutoff: usize) -> EvalOptions {
    EvalOptions {
        target: EvalTarget::Validation,
        cutoffs: vec![cutoff],
        ..eval.clone()
    }
}

fn measure(model: &dyn ScoringModel, split: &SplitTriple, opts: &EvalOptions, cutoff: usize) -> Result<BTreeMap<String, f64>> {
    let res = evaluate_loo(model, split, opts)?;
    metrics_for(cutoff)
        .into_iter()
        .map(|m| Ok((m.to_string(), res.metric(m)?)))
        .collect()
}

fn record(run: usize, seed: u64, variant: &str, outcome: Result<BTreeMap<String, f64>>) -> RunRecord {
    let (metrics, failure) = match outcome {
        Ok(m) => (m, None),
        Err(e) => {
            log::warn!("run {run} ({variant}) failed: {e}");
            (BTreeMap::new(), Some(e.to_string()))
        }
    };
    RunRecord {
        run,
        seed,
        variant: variant.to_string(),
        metrics,
        failure,
    }
}

fn run_repeats(n: usize, parallel: bool, f: impl Fn(usize) -> Vec<RunRecord> + Sync) -> Vec<RunRecord> {
    if parallel {
        (0..n).into_par_iter().flat_map_iter(&f).collect()
    } else {
        (0..n).flat_map(f).collect()
    }
}

fn split_summary(split: &SplitTriple) -> serde_json::Value {
    serde_json::json!({
        "n_users": split.n_users(),
        "n_items": split.n_items(),
        "train_nnz": split.train.nnz(),
        "validation_nnz": split.validation.nnz(),
        "test_nnz": split.test.nnz(),
        "seed": split.seed,
        "policy": split.policy,
    })
}

fn mask_label(m: MaskMode) -> String {
    m.name().to_string()
}

/// Evaluates the dot-product model, and optionally a convolution model
/// trained on the permuted maps, under `n_permutations` consistent random
/// reorderings of the latent factors. Every permutation shares the tower
/// and sampling seed, so the permutation is the only thing that varies.
pub fn run_permutation_study(base: &EmbeddingPair<f64>, split: &SplitTriple, cfg: &PermutationConfig) -> Result<StudyReport> {
    if cfg.n_permutations == 0 {
        return Err(Error::invalid("n_permutations must be at least 1"));
    }
    let test = test_options(&cfg.eval, cfg.cutoff);
    let val = validation_options(&cfg.eval, cfg.cutoff);
    let mut variants = vec!["dot_product".to_string()];
    if cfg.conv.is_some() {
        variants.push("convrec".into());
    }
    let metrics = metrics_for(cfg.cutoff).iter().map(|m| m.to_string()).collect();
    let mut report = StudyReport::new(
        StudyKind::Permutation,
        serde_json::json!({ "study": cfg, "split": split_summary(split), "k": base.k() }),
        variants,
        metrics,
    );
    report.seeds = (0..cfg.n_permutations).map(|r| rng::derive(cfg.seed, r as u64)).collect();
    let seeds = report.seeds.clone();
    report.runs = run_repeats(cfg.n_permutations, cfg.parallel, |r| {
        let seed = seeds[r];
        let perm = FactorPermutation::random(base.k(), seed);
        let permuted = match permute_factors(base, &perm) {
            Ok(p) => p,
            Err(e) => return vec![record(r, seed, "dot_product", Err(e))],
        };
        let mut out = vec![record(r, seed, "dot_product", measure(&DotModel(permuted.clone()), split, &test, cfg.cutoff))];
        if let Some(recipe) = &cfg.conv {
            let outcome = recipe
                .fit(permuted, split, MaskMode::Full, cfg.seed, &val)
                .and_then(|(m, _)| measure(&m.scorer(MaskMode::Full), split, &test, cfg.cutoff));
            out.push(record(r, seed, "convrec", outcome));
        }
        out
    });
    report.summarize();
    report
        .notes
        .push("each run applies one random factor permutation to both user and item embeddings".into());
    Ok(report)
}

/// Ablation 1: one model per repeat trained on the full map, evaluated with
/// full, diagonal-only and off-diagonal-only inference masks.
pub fn run_ablation_1(base: Option<&EmbeddingPair<f64>>, split: &SplitTriple, cfg: &AblationConfig) -> Result<StudyReport> {
    let masks = MaskMode::ALL;
    let mut report = ablation_report(StudyKind::Ablation1, base, split, cfg)?;
    let seeds = report.seeds.clone();
    let val = validation_options(&cfg.eval, cfg.cutoff);
    let test = test_options(&cfg.eval, cfg.cutoff);
    report.runs = run_repeats(cfg.n_repeats, cfg.parallel, |r| {
        let seed = seeds[r];
        let fitted = cfg
            .recipe
            .embeddings(base, split, seed)
            .and_then(|e| cfg.recipe.fit(e, split, MaskMode::Full, seed, &val));
        match fitted {
            Ok((model, _)) => masks
                .iter()
                .map(|&m| record(r, seed, m.name(), measure(&model.scorer(m), split, &test, cfg.cutoff)))
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                masks
                    .iter()
                    .map(|m| record(r, seed, m.name(), Err(Error::invalid(msg.clone()))))
                    .collect()
            }
        }
    });
    finish_ablation(&mut report, cfg, &[(MaskMode::Full, MaskMode::ElementWise), (MaskMode::Full, MaskMode::Correlations)])?;
    report
        .notes
        .push("every repeat trains once on the full map; the variants differ only in the inference mask".into());
    Ok(report)
}

/// Ablation 2: separate models trained from scratch on each mask and
/// evaluated with the mask they were trained on. The three models of a
/// repeat share its seed.
pub fn run_ablation_2(base: Option<&EmbeddingPair<f64>>, split: &SplitTriple, cfg: &AblationConfig) -> Result<StudyReport> {
    let mut report = ablation_report(StudyKind::Ablation2, base, split, cfg)?;
    let seeds = report.seeds.clone();
    let val = validation_options(&cfg.eval, cfg.cutoff);
    let test = test_options(&cfg.eval, cfg.cutoff);
    report.runs = run_repeats(cfg.n_repeats, cfg.parallel, |r| {
        let seed = seeds[r];
        MaskMode::ALL
            .iter()
            .map(|&m| {
                let outcome = cfg
                    .recipe
                    .embeddings(base, split, seed)
                    .and_then(|e| cfg.recipe.fit(e, split, m, seed, &val))
                    .and_then(|(model, _)| measure(&model.scorer(m), split, &test, cfg.cutoff));
                record(r, seed, m.name(), outcome)
            })
            .collect()
    });
    finish_ablation(
        &mut report,
        cfg,
        &[
            (MaskMode::Full, MaskMode::ElementWise),
            (MaskMode::Full, MaskMode::Correlations),
            (MaskMode::ElementWise, MaskMode::Correlations),
        ],
    )?;
    report
        .notes
        .push("each variant is a separate model trained and evaluated on its own mask".into());
    Ok(report)
}

fn ablation_report(kind: StudyKind, base: Option<&EmbeddingPair<f64>>, split: &SplitTriple, cfg: &AblationConfig) -> Result<StudyReport> {
    if cfg.n_repeats == 0 {
        return Err(Error::invalid("n_repeats must be at least 1"));
    }
    if base.is_none() && cfg.recipe.mode == EmbeddingMode::Frozen {
        return Err(Error::invalid("frozen-embedding ablations need pretrained embeddings"));
    }
    cfg.recipe.train.validate()?;
    let k = base.map_or(cfg.recipe.factors, |b| b.k());
    ConvTowerConfig::halving(k, cfg.recipe.channels, 0)?;
    let metrics = metrics_for(cfg.cutoff).iter().map(|m| m.to_string()).collect();
    let mut report = StudyReport::new(
        kind,
        serde_json::json!({
            "study": cfg,
            "split": split_summary(split),
            "k": k,
            "pretrained": base.is_some(),
        }),
        MaskMode::ALL.iter().map(|&m| mask_label(m)).collect(),
        metrics,
    );
    report.seeds = (0..cfg.n_repeats).map(|r| rng::derive(cfg.seed, r as u64)).collect();
    if base.is_some() {
        report
            .notes
            .push("repeats permute the pretrained factors and reseed tower init and triple sampling".into());
    } else {
        report
            .notes
            .push("repeats reseed embedding init, tower init and triple sampling on a fixed split".into());
    }
    Ok(report)
}

fn finish_ablation(report: &mut StudyReport, cfg: &AblationConfig, pairs: &[(MaskMode, MaskMode)]) -> Result<()> {
    report.summarize();
    for m in metrics_for(cfg.cutoff) {
        for &(a, b) in pairs {
            report.compare(&m.to_string(), a.name(), b.name(), cfg.alpha)?;
        }
    }
    Ok(())
}
