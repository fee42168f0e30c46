//! Battery capacity prediction with a stacked ensemble of native learners.
//!
//! The pipeline runs per-cycle tables ([`data`]) through correlation-based
//! feature pruning ([`featsel`]), fits ridge, boosted-tree and LSTM base
//! models ([`learners`]) and fuses their out-of-fold predictions with a
//! variance-discounted ridge meta-model ([`ensemble`]). [`evalkit`] scores
//! and compares models, [`interpret`] explains them and [`tune`] searches
//! hyperparameters.

// `!(a < b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod evalkit;
pub mod featsel;
pub mod interpret;
pub mod learners;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod tune;

pub use error::{Error, Result};

pub type CorrelationReport = featsel::CorrelationReport<f64>;
pub type FusionWeights = ensemble::FusionWeights<f64>;
pub type RidgeSolution = linalg::RidgeSolution<f64>;
pub type ResidualHist = interpret::ResidualHist<f64>;
