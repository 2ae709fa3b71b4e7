use std::fs;
use std::path::Path;

use imaplab::baselines::{load_model, save_model, ScoringModel};
use imaplab::convrec::{load_convrec, save_convrec, EmbeddingMode};
use imaplab::dataio::{leave_one_out_split, load_interactions, read_split, write_split, SplitPolicy, SplitTriple};
use imaplab::embed::{load_embeddings, outer_product, FactorPermutation};
use imaplab::eval::{evaluate_loo, Metric};
use imaplab::hpo::tune_and_retrain;
use imaplab::studies::{
    pretrain_embeddings, run_ablation_1, run_ablation_2, run_baseline_comparison, run_permutation_study,
    synthetic_dataset, StudyReport,
};
use imaplab::{ConvRec, Embeddings};

use crate::config::{DataSource, ExperimentConfig, FitTarget, HeatmapSource};
use crate::heatmap::write_heatmap;
use crate::{CliError, Command};

pub(crate) fn dispatch(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    match command {
        Command::PrepareData => prepare_data(cfg, out),
        Command::Fit => fit(cfg, out),
        Command::Evaluate => evaluate(cfg, out),
        Command::Hpo => hpo(cfg, out),
        Command::PermStudy => {
            let split = load_split(cfg)?;
            let base = pretrain_embeddings(&split, &cfg.pretrain)?;
            save(run_permutation_study(&base, &split, &cfg.permutation)?, out, "perm_study")
        }
        Command::Ablation1 | Command::Ablation2 => {
            let split = load_split(cfg)?;
            let base = match cfg.ablation.recipe.mode {
                EmbeddingMode::Frozen => Some(pretrain_embeddings(&split, &cfg.pretrain)?),
                EmbeddingMode::Learnable => None,
            };
            if command == Command::Ablation1 {
                save(run_ablation_1(base.as_ref(), &split, &cfg.ablation)?, out, "ablation1")
            } else {
                save(run_ablation_2(base.as_ref(), &split, &cfg.ablation)?, out, "ablation2")
            }
        }
        Command::CompareBaselines => {
            let split = load_split(cfg)?;
            save(run_baseline_comparison(&split, &cfg.comparison)?, out, "baseline_comparison")
        }
        Command::Heatmap => heatmap(cfg, out),
    }
}

fn missing(section: &str, command: &str) -> CliError {
    CliError::User(format!("`{command}` needs a `{section}` section in the config"))
}

fn load_split(cfg: &ExperimentConfig) -> Result<SplitTriple, CliError> {
    let data = match cfg.data.as_ref().ok_or_else(|| missing("data", "this command"))? {
        DataSource::Split { dir } => return Ok(read_split(dir)?),
        DataSource::File { path, options } => load_interactions(path, options)?.0,
        DataSource::Synthetic(s) => synthetic_dataset(s)?,
    };
    let policy = cfg.split.policy.unwrap_or_else(|| SplitPolicy::default_for(&data));
    Ok(leave_one_out_split(&data, policy, cfg.split.seed)?)
}

fn save(report: StudyReport, out: &Path, stem: &str) -> Result<(), CliError> {
    report.save(out, stem)?;
    println!("wrote {}", out.join(format!("{stem}.md")).display());
    Ok(())
}

fn prepare_data(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if let Some(DataSource::File { path, options }) = &cfg.data {
        let (_, ids) = load_interactions(path, options)?;
        fs::write(out.join("ids.json"), serde_json::to_string_pretty(&ids)? + "\n")?;
    }
    let split = load_split(cfg)?;
    let dir = out.join("split");
    write_split(&dir, &split)?;
    let m = split.manifest();
    println!(
        "wrote {}: {} users, {} items, {} train / {} validation / {} test",
        dir.display(),
        m.n_users,
        m.n_items,
        m.train,
        m.validation,
        m.test
    );
    Ok(())
}

fn fit(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let target = cfg.fit.as_ref().ok_or_else(|| missing("fit", "fit"))?;
    let split = load_split(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let dir = out.join("model");
    match target {
        FitTarget::Baseline { algorithm, params } => {
            let model = algorithm.fit(&split.train, params, seed)?;
            save_model(&dir, &model)?;
        }
        FitTarget::Convrec { recipe, mask } => {
            let embeddings = match recipe.mode {
                EmbeddingMode::Frozen => pretrain_embeddings(&split, &cfg.pretrain)?,
                EmbeddingMode::Learnable => Embeddings::random(
                    split.n_users(),
                    split.n_items(),
                    recipe.factors,
                    recipe.embedding_scale,
                    seed,
                ),
            };
            let (model, trace) = recipe.fit(embeddings, &split, *mask, seed, &cfg.eval)?;
            save_convrec(&dir, &model)?;
            trace.save_csv(&dir.join("trace.csv"))?;
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let dir = cfg.model.as_ref().ok_or_else(|| missing("model", "evaluate"))?;
    if !dir.is_dir() {
        return Err(CliError::User(format!("{}: no such model directory", dir.display())));
    }
    let split = load_split(cfg)?;
    let result = if dir.join("convrec.json").exists() {
        let model: ConvRec = load_convrec(dir)?;
        evaluate_loo(&model.scorer(cfg.mask) as &dyn ScoringModel, &split, &cfg.eval)?
    } else {
        evaluate_loo(&load_model(dir)?, &split, &cfg.eval)?
    };
    result.save(out, "evaluation")?;
    for (i, c) in result.cutoffs.iter().enumerate() {
        println!("HR@{c} {:.4}  NDCG@{c} {:.4}", result.hr[i], result.ndcg[i]);
    }
    Ok(())
}

fn hpo(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let algorithm = cfg.algorithm.ok_or_else(|| missing("algorithm", "hpo"))?;
    let space = cfg.space.clone().unwrap_or_else(|| algorithm.default_space());
    let metric = cfg.metric.unwrap_or(Metric::ndcg(10));
    let split = load_split(cfg)?;
    let tuned = tune_and_retrain(algorithm, &space, &split, metric, &cfg.search, &cfg.eval)?;
    tuned.trace.save(out, "hpo_trace")?;
    tuned.test.save(out, "test")?;
    fs::write(
        out.join("hpo_summary.json"),
        serde_json::to_string_pretty(&tuned.summary(metric))? + "\n",
    )?;
    save_model(&out.join("model"), &tuned.model)?;
    println!(
        "{}: best validation {metric} = {:.4} with {}",
        algorithm.label(),
        tuned.validation_value,
        serde_json::to_string(&tuned.best_config)?
    );
    Ok(())
}

fn heatmap(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let hm = cfg.heatmap.as_ref().ok_or_else(|| missing("heatmap", "heatmap"))?;
    let name = hm.name.as_str();
    let (p, q) = match &hm.source {
        HeatmapSource::Matrix(rows) => {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(CliError::User("heatmap matrix rows differ in length".into()));
            }
            let flat: Vec<f64> = rows.concat();
            write_heatmap(out, name, &flat, rows.len(), cols)?;
            return Ok(());
        }
        HeatmapSource::Vector(v) => {
            write_heatmap(out, name, v, 1, v.len())?;
            return Ok(());
        }
        HeatmapSource::Embeddings { path, user, item } => {
            let pair: Embeddings = load_embeddings(path)?;
            if *user >= pair.n_users() || *item >= pair.n_items() {
                return Err(CliError::User(format!(
                    "({user}, {item}) is outside the {} x {} embedding tables",
                    pair.n_users(),
                    pair.n_items()
                )));
            }
            (pair.user(*user).to_vec(), pair.item(*item).to_vec())
        }
        HeatmapSource::Random { k, seed } => {
            let pair = Embeddings::random(1, 1, *k, 1.0, *seed);
            (pair.user(0).to_vec(), pair.item(0).to_vec())
        }
    };
    let mut pairs = vec![(name.to_string(), p, q)];
    if let Some(seed) = hm.permutation_seed {
        let perm = FactorPermutation::random(pairs[0].1.len(), seed);
        let (pp, pq) = (perm.apply(&pairs[0].1), perm.apply(&pairs[0].2));
        pairs.push((format!("{name}_permuted"), pp, pq));
    }
    for (stem, p, q) in &pairs {
        let k = p.len();
        write_heatmap(out, &format!("{stem}_user"), p, 1, k)?;
        write_heatmap(out, &format!("{stem}_item"), q, 1, k)?;
        write_heatmap(out, &format!("{stem}_map"), outer_product(p, q)?.cells(), k, k)?;
    }
    println!("wrote {} heatmap(s) to {}", pairs.len() * 3, out.display());
    Ok(())
}
