//! Convolution over user-item interaction maps, the non-neural baselines it is
//! usually compared against, and the experiment harness used to probe whether
//! the convolution actually exploits correlations between latent factors.
//!
//! The numerical core ([`embed`], [`convrec`]) is generic over the scalar type
//! through [`Scalar`]; the aliases below pin the common instantiations.

pub mod baselines;
pub mod convrec;
pub mod dataio;
pub mod embed;
pub mod error;
pub mod eval;
pub mod hpo;
pub mod matrix;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod studies;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision embeddings; the default everywhere training or gradient
/// checks are involved.
pub type Embeddings = embed::EmbeddingPair<f64>;
pub type Embeddings32 = embed::EmbeddingPair<f32>;

pub type Map = embed::InteractionMap<f64>;
pub type Map32 = embed::InteractionMap<f32>;

pub type ConvRec = convrec::ConvRecModel<f64>;
pub type ConvRec32 = convrec::ConvRecModel<f32>;

pub type Mat = matrix::Matrix<f64>;
