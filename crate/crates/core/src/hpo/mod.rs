//! Hyperparameter spaces, GP-based Bayesian search and the tune-then-refit
//! protocol.

mod gp;
mod search;
pub mod space;
mod tune;

pub use gp::{expected_improvement, matern52, GaussianProcess};
pub use search::{bayesian_search, Phase, SearchOptions, SearchTrace, Strategy, Trial};
pub use space::*;
pub use tune::{tune_and_retrain, TuneSummary, TunedModel};
