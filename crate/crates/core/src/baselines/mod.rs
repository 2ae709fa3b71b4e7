//! Non-neural top-N recommenders and MF-BPR, all behind [`ScoringModel`].

pub(crate) mod bpr;
mod checkpoint;
mod graph;
mod ials;
mod knn;
mod popular;
mod slim;
mod svd;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bpr::{bpr_objective, bpr_step, fit_mf_bpr, BprConfig};
pub use checkpoint::{load_model, save_model, ModelMetadata};
pub use graph::{p3alpha_similarity, rp3beta_rerank};
pub use ials::{fit_ials, ials_objective, ials_solve_user, IalsConfig};
pub use knn::{cosine_similarity_shrunk, knn_scores, Axis, SimilarityMatrix};
pub use popular::{fit_top_popular, TopPopular};
pub use slim::{fit_slim, slim_fit_column, slim_objective, SlimColumn, SlimConfig};
pub use svd::{fit_puresvd, truncated_svd};

use crate::dataio::InteractionMatrix;
use crate::embed::EmbeddingPair;
use crate::error::{Error, Result};
use crate::hpo::{ConfigExt, Configuration, Dimension, HyperparameterSpace};

/// Anything that can score the full catalog for a user.
pub trait ScoringModel: Send + Sync {
    fn n_items(&self) -> usize;

    /// Finite score per item, higher is better.
    fn score(&self, user: usize) -> Vec<f64>;

    /// Scores for a subset of items. Models with expensive per-item
    /// evaluation override this.
    fn score_items(&self, user: usize, items: &[usize]) -> Vec<f64> {
        let all = self.score(user);
        items.iter().map(|&i| all[i]).collect()
    }
}

/// Scores with the user's `exclude` items set to negative infinity.
pub fn score_excluding(model: &dyn ScoringModel, user: usize, exclude: &InteractionMatrix) -> Vec<f64> {
    let mut scores = model.score(user);
    for i in exclude.user_items(user) {
        scores[i] = f64::NEG_INFINITY;
    }
    scores
}

/// Item indices by descending score, ties broken by ascending index.
pub fn rank_items(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    TopPopular,
    ItemKnn,
    UserKnn,
    P3Alpha,
    Rp3Beta,
    PureSvd,
    Slim,
    Ials,
    MfBpr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::TopPopular,
        Algorithm::ItemKnn,
        Algorithm::UserKnn,
        Algorithm::P3Alpha,
        Algorithm::Rp3Beta,
        Algorithm::PureSvd,
        Algorithm::Slim,
        Algorithm::Ials,
        Algorithm::MfBpr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::TopPopular => "top_popular",
            Algorithm::ItemKnn => "item_knn",
            Algorithm::UserKnn => "user_knn",
            Algorithm::P3Alpha => "p3alpha",
            Algorithm::Rp3Beta => "rp3beta",
            Algorithm::PureSvd => "pure_svd",
            Algorithm::Slim => "slim",
            Algorithm::Ials => "ials",
            Algorithm::MfBpr => "mf_bpr",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::TopPopular => "TopPopular",
            Algorithm::ItemKnn => "ItemKNN",
            Algorithm::UserKnn => "UserKNN",
            Algorithm::P3Alpha => "P3alpha",
            Algorithm::Rp3Beta => "RP3beta",
            Algorithm::PureSvd => "PureSVD",
            Algorithm::Slim => "SLIM",
            Algorithm::Ials => "iALS",
            Algorithm::MfBpr => "MF-BPR",
        }
    }

    /// Search ranges used when an experiment does not declare its own.
    /// These are reconstructions, not published settings.
    pub fn default_space(self) -> HyperparameterSpace {
        let s = HyperparameterSpace::new();
        match self {
            Algorithm::TopPopular => s,
            Algorithm::ItemKnn | Algorithm::UserKnn => s
                .with("top_k", Dimension::integer(5, 800))
                .with("shrink", Dimension::integer(0, 1000)),
            Algorithm::P3Alpha => s
                .with("top_k", Dimension::integer(5, 800))
                .with("alpha", Dimension::real(0.0, 2.0)),
            Algorithm::Rp3Beta => s
                .with("top_k", Dimension::integer(5, 800))
                .with("alpha", Dimension::real(0.0, 2.0))
                .with("beta", Dimension::real(0.0, 2.0)),
            Algorithm::PureSvd => s.with("factors", Dimension::integer(1, 350)),
            Algorithm::Slim => s
                .with("top_k", Dimension::integer(5, 800))
                .with("l1", Dimension::log_real(1e-5, 1.0))
                .with("l2", Dimension::log_real(1e-3, 1e3)),
            Algorithm::Ials => s
                .with("factors", Dimension::log_integer(16, 512))
                .with("alpha", Dimension::log_real(1e-3, 50.0))
                .with("reg", Dimension::log_real(1e-5, 1e-2)),
            Algorithm::MfBpr => s
                .with("factors", Dimension::log_integer(16, 512))
                .with("learning_rate", Dimension::log_real(1e-4, 1e-1))
                .with("reg", Dimension::log_real(1e-5, 1e-2))
                .with("epochs", Dimension::integer(5, 200)),
        }
    }

    /// Fits the algorithm on `train` with hyperparameters from `params`
    /// (missing entries take documented defaults).
    pub fn fit(self, train: &InteractionMatrix, params: &Configuration, seed: u64) -> Result<FittedModel> {
        train.ensure_not_test(self.name())?;
        let (m, n) = (train.n_users(), train.n_items());
        let kind = match self {
            Algorithm::TopPopular => ModelKind::Popularity(fit_top_popular(train).counts().to_vec()),
            Algorithm::ItemKnn => ModelKind::ItemSimilarity(cosine_similarity_shrunk(
                train,
                params.real("shrink", 10.0)?,
                params.count("top_k", 100)?,
                Axis::Item,
            )?),
            Algorithm::UserKnn => ModelKind::UserSimilarity(cosine_similarity_shrunk(
                train,
                params.real("shrink", 10.0)?,
                params.count("top_k", 100)?,
                Axis::User,
            )?),
            Algorithm::P3Alpha => ModelKind::ItemSimilarity(p3alpha_similarity(
                train,
                params.real("alpha", 1.0)?,
                params.count("top_k", 100)?,
            )?),
            Algorithm::Rp3Beta => {
                let full = p3alpha_similarity(train, params.real("alpha", 1.0)?, usize::MAX)?;
                let counts = train.item_counts();
                let reranked = rp3beta_rerank(&full, &counts, params.real("beta", 0.5)?)?;
                ModelKind::ItemSimilarity(reranked.truncate_top_k(params.count("top_k", 100)?))
            }
            Algorithm::PureSvd => {
                let rank = params.count("factors", 50)?.clamp(1, m.min(n).max(1));
                ModelKind::Factors(fit_puresvd(train, rank, seed)?)
            }
            Algorithm::Slim => {
                let cfg = SlimConfig {
                    l1: params.real("l1", 1e-3)?,
                    l2: params.real("l2", 1e-1)?,
                    top_k: params.count("top_k", 100)?,
                    ..SlimConfig::default()
                };
                ModelKind::ItemSimilarity(fit_slim(train, &cfg)?)
            }
            Algorithm::Ials => {
                let cfg = IalsConfig {
                    factors: params.count("factors", 32)?,
                    confidence_alpha: params.real("alpha", 1.0)?,
                    reg: params.real("reg", 1e-3)?,
                    iterations: params.count("iterations", 15)?,
                    seed,
                };
                ModelKind::Factors(fit_ials(train, &cfg)?.0)
            }
            Algorithm::MfBpr => {
                let cfg = BprConfig {
                    factors: params.count("factors", 32)?,
                    learning_rate: params.real("learning_rate", 0.05)?,
                    reg: params.real("reg", 1e-4)?,
                    epochs: params.count("epochs", 30)?,
                    seed,
                    ..BprConfig::default()
                };
                ModelKind::Factors(fit_mf_bpr(train, &cfg)?)
            }
        };
        Ok(FittedModel {
            algorithm: self,
            params: params.clone(),
            seed,
            kind,
            profiles: matches!(self, Algorithm::ItemKnn | Algorithm::UserKnn | Algorithm::P3Alpha | Algorithm::Rp3Beta | Algorithm::Slim)
                .then(|| train.clone()),
        })
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key || a.label().to_ascii_lowercase().replace('-', "_") == key)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Per-item interaction counts, shared by every user.
    Popularity(Vec<f64>),
    /// Item x item weights applied to the user's profile row.
    ItemSimilarity(SimilarityMatrix),
    /// User x user weights applied to the other users' rows.
    UserSimilarity(SimilarityMatrix),
    /// Latent factors scored by dot product.
    Factors(EmbeddingPair<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub algorithm: Algorithm,
    pub params: Configuration,
    pub seed: u64,
    pub kind: ModelKind,
    /// Training interactions, kept for neighbourhood models whose scores are
    /// computed from user profiles.
    pub profiles: Option<InteractionMatrix>,
}

impl ScoringModel for FittedModel {
    fn n_items(&self) -> usize {
        match &self.kind {
            ModelKind::Popularity(c) => c.len(),
            ModelKind::ItemSimilarity(s) => s.n_cols(),
            ModelKind::UserSimilarity(_) => self.profiles.as_ref().map_or(0, |p| p.n_items()),
            ModelKind::Factors(f) => f.n_items(),
        }
    }

    fn score(&self, user: usize) -> Vec<f64> {
        match &self.kind {
            ModelKind::Popularity(c) => c.clone(),
            ModelKind::ItemSimilarity(s) => {
                knn_scores(s, self.profiles.as_ref().expect("profiles"), user, Axis::Item)
            }
            ModelKind::UserSimilarity(s) => {
                knn_scores(s, self.profiles.as_ref().expect("profiles"), user, Axis::User)
            }
            ModelKind::Factors(f) => (0..f.n_items()).map(|i| f.predict(user, i)).collect(),
        }
    }

    fn score_items(&self, user: usize, items: &[usize]) -> Vec<f64> {
        match &self.kind {
            ModelKind::Factors(f) => items.iter().map(|&i| f.predict(user, i)).collect(),
            ModelKind::Popularity(c) => items.iter().map(|&i| c[i]).collect(),
            _ => {
                let all = self.score(user);
                items.iter().map(|&i| all[i]).collect()
            }
        }
    }
}

/// Plain dot-product model over a borrowed or owned embedding pair.
#[derive(Debug, Clone)]
pub struct DotModel(pub EmbeddingPair<f64>);

impl ScoringModel for DotModel {
    fn n_items(&self) -> usize {
        self.0.n_items()
    }

    fn score(&self, user: usize) -> Vec<f64> {
        (0..self.0.n_items()).map(|i| self.0.predict(user, i)).collect()
    }

    fn score_items(&self, user: usize, items: &[usize]) -> Vec<f64> {
        items.iter().map(|&i| self.0.predict(user, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Interaction, Partition};

    #[test]
    fn ranking_tie_rule() {
        assert_eq!(rank_items(&[5.0, 2.0, 9.0]), vec![2, 0, 1]);
        assert_eq!(rank_items(&[1.0, 3.0, 3.0, 1.0]), vec![1, 2, 0, 3]);
    }

    #[test]
    fn exclusion_sentinel() {
        let train = InteractionMatrix::from_entries(
            1,
            3,
            vec![Interaction::new(0, 1)],
            Partition::Train,
        )
        .unwrap();
        let model = Algorithm::TopPopular.fit(&train, &Configuration::new(), 0).unwrap();
        let s = score_excluding(&model, 0, &train);
        assert_eq!(s[1], f64::NEG_INFINITY);
        assert!(s[0].is_finite() && s[2].is_finite());
    }

    #[test]
    fn algorithm_names_parse() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
            a.default_space().validate().unwrap();
        }
    }

    #[test]
    fn fit_refuses_test_partition() {
        let test = InteractionMatrix::empty(2, 2, Partition::Test);
        assert!(matches!(
            Algorithm::ItemKnn.fit(&test, &Configuration::new(), 0),
            Err(Error::Leakage(_))
        ));
    }
}
