//! Ad text strength scoring.
//!
//! An input ad is compared against its semantic neighborhood in a pool of
//! existing ads: if the retrieved neighbors that beat it on predicted CTR do
//! so by a wide enough relative margin, the ad is flagged weak and the
//! stronger neighbors (with brand references masked) come back as
//! suggestions.
//!
//! The crate is split along the pipeline:
//!
//! - [`corpus`]: ad records, pool loading, weighted-sample expansion, splits
//! - [`textproc`]: ad text composition, tokenization, vocabularies, sparse features
//! - [`ctrmodel`]: LR / NBLR pCTR models trained on weighted cross entropy
//! - [`metrics`]: impression-weighted AUC, Kendall tau-b, Spearman, precision@k
//! - [`simpairs`]: campaign-hierarchy weak labels and the cosine regression loss
//! - [`embed`]: embedding providers and cosine similarity
//! - [`annindex`]: exact and HNSW cosine k-NN over the pool
//! - [`tsi`]: the strength rule, the threshold sweep and retrieval precision tables
//! - [`anonymize`]: block-list and pattern based brand masking
//! - [`analytics`]: session segmentation and suggestion adoption
//! - [`synth`]: seeded synthetic corpora and fixtures
//!
//! Numeric code is generic over the scalar type. The concrete aliases below
//! cover the common instantiations; the exact rational forms are used where
//! a property must hold without rounding.

pub mod analytics;
pub mod annindex;
pub mod anonymize;
pub mod corpus;
pub mod ctrmodel;
pub mod embed;
mod error;
pub mod metrics;
pub mod scalar;
pub mod simpairs;
pub mod synth;
pub mod textproc;
pub mod tsi;

pub use error::{Error, ProviderError, Result};
pub use scalar::{Real, Scalar};

use num_rational::BigRational;

/// Double precision LR / NBLR model.
pub type LrModelF64 = ctrmodel::LrModel<f64>;
/// Single precision LR / NBLR model.
pub type LrModelF32 = ctrmodel::LrModel<f32>;

pub type NeighborF64 = tsi::Neighbor<f64>;
pub type TsiConfigF64 = tsi::TsiConfig<f64>;
pub type TsiResultF64 = tsi::TsiResult<f64>;

/// Strength rule evaluated in exact rational arithmetic.
pub type ExactNeighbor = tsi::Neighbor<BigRational>;
pub type ExactTsiConfig = tsi::TsiConfig<BigRational>;
pub type ExactTsiResult = tsi::TsiResult<BigRational>;

pub type SparseVecF64 = textproc::SparseVec<f64>;
