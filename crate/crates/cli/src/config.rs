//! Experiment configuration: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use imaplab::baselines::{Algorithm, BprConfig};
use imaplab::dataio::{LoadOptions, SplitPolicy};
use imaplab::embed::MaskMode;
use imaplab::eval::{EvalOptions, Metric};
use imaplab::hpo::{Configuration, HyperparameterSpace, SearchOptions};
use imaplab::studies::{AblationConfig, ComparisonConfig, ConvRecipe, PermutationConfig, SyntheticConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where interactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A user/item[/value[/timestamp]] file, split on the fly.
    File {
        path: PathBuf,
        #[serde(default)]
        options: LoadOptions,
    },
    /// A directory previously written by `prepare-data`.
    Split { dir: PathBuf },
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSettings {
    /// Latest-timestamp when every row has one, random otherwise.
    pub policy: Option<SplitPolicy>,
    pub seed: u64,
}

/// What `fit` trains: a baseline with fixed hyperparameters or the
/// convolutional model on top of pretrained (or random) embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FitTarget {
    Baseline {
        algorithm: Algorithm,
        #[serde(default)]
        params: Configuration,
    },
    Convrec {
        #[serde(default)]
        recipe: ConvRecipe,
        #[serde(default)]
        mask: MaskMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HeatmapSource {
    Matrix(Vec<Vec<f64>>),
    Vector(Vec<f64>),
    /// The interaction map of one (user, item) pair of a saved embedding file,
    /// together with both factor vectors.
    Embeddings { path: PathBuf, user: usize, item: usize },
    /// Random factor vectors, as in a toy illustration.
    Random { k: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapConfig {
    pub source: HeatmapSource,
    /// Also render the same pair under one random factor permutation.
    #[serde(default)]
    pub permutation_seed: Option<u64>,
    #[serde(default = "default_stem")]
    pub name: String,
}

fn default_stem() -> String {
    "heatmap".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: Option<DataSource>,
    pub split: SplitSettings,
    /// Overrides every seed below when set. `--seed` overrides this.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fit: Option<FitTarget>,
    /// Saved model directory read by `evaluate`.
    pub model: Option<PathBuf>,
    /// Inference mask used when `model` is a convolutional checkpoint.
    pub mask: MaskMode,
    pub eval: EvalOptions,
    /// `hpo` target.
    pub algorithm: Option<Algorithm>,
    pub space: Option<HyperparameterSpace>,
    pub metric: Option<Metric>,
    pub search: SearchOptions,
    /// Pretraining of the frozen embeddings used by the studies.
    pub pretrain: BprConfig,
    pub permutation: PermutationConfig,
    pub ablation: AblationConfig,
    pub comparison: ComparisonConfig,
    pub heatmap: Option<HeatmapConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::User(m) => CliError::User(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Validates the whole document and reports every unknown key at once.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::User(format!("invalid JSON: {e}")))?;
        let mut unknown = Vec::new();
        loop {
            match serde_path_to_error::deserialize::<_, Self>(&value) {
                Ok(cfg) if unknown.is_empty() => return Ok(cfg),
                Ok(_) => break,
                Err(err) => {
                    let path = err.path().to_string();
                    let message = err.inner().to_string();
                    if !message.starts_with("unknown field") || !remove_key(&mut value, &path) {
                        if unknown.is_empty() {
                            return Err(CliError::User(format!("config schema error at {path}: {message}")));
                        }
                        break;
                    }
                    unknown.push(path);
                }
            }
        }
        Err(CliError::User(format!("config schema error: unknown key(s) {}", unknown.join(", "))))
    }

    /// Pushes the global seed into every seeded section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.split.seed = seed;
        self.eval.seed = seed;
        self.search.seed = seed;
        self.pretrain.seed = seed;
        self.permutation.seed = seed;
        self.permutation.eval.seed = seed;
        self.ablation.seed = seed;
        self.ablation.eval.seed = seed;
        self.comparison.search.seed = seed;
        self.comparison.eval.seed = seed;
        if let Some(DataSource::Synthetic(s)) = &mut self.data {
            s.seed = seed;
        }
    }
}

/// Deletes the key addressed by a dotted `serde_path_to_error` path.
fn remove_key(root: &mut serde_json::Value, path: &str) -> bool {
    let segments: Vec<&str> = path.split('.').collect();
    let Some((last, parents)) = segments.split_last() else {
        return false;
    };
    let mut node = root;
    for seg in parents {
        node = match (seg.strip_prefix('[').and_then(|s| s.strip_suffix(']')), node) {
            (Some(idx), serde_json::Value::Array(a)) => match idx.parse::<usize>().ok().and_then(|i| a.get_mut(i)) {
                Some(n) => n,
                None => return false,
            },
            (None, serde_json::Value::Object(o)) => match o.get_mut(*seg) {
                Some(n) => n,
                None => return false,
            },
            _ => return false,
        };
    }
    match node {
        serde_json::Value::Object(o) => o.remove(*last).is_some(),
        _ => false,
    }
}
