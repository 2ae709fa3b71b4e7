//! On-disk fitted models: `model.json` metadata plus one payload file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Algorithm, FittedModel, ModelKind, SimilarityMatrix};
use crate::dataio::{read_indexed, write_indexed, Partition};
use crate::embed::{load_embeddings, save_embeddings};
use crate::error::{Error, Result};
use crate::hpo::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Popularity,
    ItemSimilarity,
    UserSimilarity,
    Factors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub algorithm: Algorithm,
    pub params: Configuration,
    pub seed: u64,
    pub kind: PayloadKind,
    pub n_users: usize,
    pub n_items: usize,
    /// Partition the model was fitted on, when profiles were stored.
    pub fit_partition: Option<Partition>,
}

const META: &str = "model.json";
const FACTORS: &str = "factors.emb";
const SIMILARITY: &str = "similarity.tsv";
const POPULARITY: &str = "popularity.tsv";
const PROFILES: &str = "profiles.tsv";

fn write_similarity(path: &Path, s: &SimilarityMatrix) -> Result<()> {
    let mut out = format!("# {} {}\n", s.n_rows(), s.n_cols());
    for (r, c, v) in s.triplets() {
        writeln!(out, "{r}\t{c}\t{v}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_similarity(path: &Path) -> Result<SimilarityMatrix> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let header = lines.next().ok_or_else(|| bad(1, "missing shape header".into()))?.1;
    let shape: Vec<usize> = header
        .trim_start_matches('#')
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(1, format!("bad shape header: {e}")))?;
    let [n_rows, n_cols] = shape[..] else {
        return Err(bad(1, "shape header needs two numbers".into()));
    };
    let mut rows = vec![Vec::new(); n_rows];
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(n + 1, format!("expected 3 fields, found {}", f.len())));
        }
        let r: usize = f[0].parse().map_err(|e| bad(n + 1, format!("row: {e}")))?;
        let c: usize = f[1].parse().map_err(|e| bad(n + 1, format!("column: {e}")))?;
        let v: f64 = f[2].parse().map_err(|e| bad(n + 1, format!("value: {e}")))?;
        if r >= n_rows {
            return Err(bad(n + 1, format!("row {r} outside {n_rows}")));
        }
        rows[r].push((c, v));
    }
    SimilarityMatrix::from_rows(n_cols, rows)
}

/// Writes `model` into `dir` (created if missing).
pub fn save_model(dir: &Path, model: &FittedModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (kind, n_users, n_items) = match &model.kind {
        ModelKind::Popularity(c) => {
            let mut out = String::new();
            for (i, v) in c.iter().enumerate() {
                writeln!(out, "{i}\t{v}").unwrap();
            }
            fs::write(dir.join(POPULARITY), out)?;
            let m = model.profiles.as_ref().map_or(0, |p| p.n_users());
            (PayloadKind::Popularity, m, c.len())
        }
        ModelKind::ItemSimilarity(s) => {
            write_similarity(&dir.join(SIMILARITY), s)?;
            let m = model.profiles.as_ref().map_or(0, |p| p.n_users());
            (PayloadKind::ItemSimilarity, m, s.n_cols())
        }
        ModelKind::UserSimilarity(s) => {
            write_similarity(&dir.join(SIMILARITY), s)?;
            let n = model.profiles.as_ref().map_or(0, |p| p.n_items());
            (PayloadKind::UserSimilarity, s.n_rows(), n)
        }
        ModelKind::Factors(f) => {
            save_embeddings(&dir.join(FACTORS), f)?;
            (PayloadKind::Factors, f.n_users(), f.n_items())
        }
    };
    if let Some(p) = &model.profiles {
        write_indexed(&dir.join(PROFILES), p)?;
    }
    let meta = ModelMetadata {
        algorithm: model.algorithm,
        params: model.params.clone(),
        seed: model.seed,
        kind,
        n_users,
        n_items,
        fit_partition: model.profiles.as_ref().map(|p| p.partition()),
    };
    fs::write(dir.join(META), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<FittedModel> {
    let meta: ModelMetadata = serde_json::from_str(&fs::read_to_string(dir.join(META))?)?;
    let profiles = match meta.fit_partition {
        Some(part) => Some(read_indexed_or_empty(&dir.join(PROFILES), meta.n_users, meta.n_items, part)?),
        None => None,
    };
    let kind = match meta.kind {
        PayloadKind::Popularity => {
            let text = fs::read_to_string(dir.join(POPULARITY))?;
            let counts = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split('\t')
                        .nth(1)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| Error::Format(format!("bad popularity line {l:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            ModelKind::Popularity(counts)
        }
        PayloadKind::ItemSimilarity => ModelKind::ItemSimilarity(read_similarity(&dir.join(SIMILARITY))?),
        PayloadKind::UserSimilarity => ModelKind::UserSimilarity(read_similarity(&dir.join(SIMILARITY))?),
        PayloadKind::Factors => ModelKind::Factors(load_embeddings(&dir.join(FACTORS))?),
    };
    if matches!(kind, ModelKind::ItemSimilarity(_) | ModelKind::UserSimilarity(_)) && profiles.is_none() {
        return Err(Error::Format("similarity model saved without user profiles".into()));
    }
    Ok(FittedModel {
        algorithm: meta.algorithm,
        params: meta.params,
        seed: meta.seed,
        kind,
        profiles,
    })
}

fn read_indexed_or_empty(
    path: &Path,
    m: usize,
    n: usize,
    part: Partition,
) -> Result<crate::dataio::InteractionMatrix> {
    match read_indexed(path, m, n, part) {
        Err(Error::EmptyInput(_)) => Ok(crate::dataio::InteractionMatrix::empty(m, n, part)),
        other => other,
    }
}
