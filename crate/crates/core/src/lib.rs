//! Listwise learning-to-rank on unique rating levels.
//!
//! The crate implements a family of rankers built around one listwise loss:
//! each query's documents are partitioned by their distinct relevance ratings
//! and, level by level, the loss rewards scoring every document at the current
//! level above everything rated strictly lower.
//!
//! Four trainers share that objective:
//!
//! * `uRank` - a feed-forward scorer trained directly on the listwise loss;
//! * `uBoost` - gradient boosting of feed-forward scorers on loss residuals;
//! * `uMart` - gradient-boosted regression trees driven by NDCG-weighted
//!   gradient/Hessian pairs;
//! * `urBoost` - boosting of recurrent conditional scorers that re-score the
//!   remaining documents after each rating level.
//!
//! Supporting modules cover LETOR-format data handling ([`data`]), NDCG/ERR
//! evaluation ([`metrics`]), the loss itself with windowed approximations and
//! analytic residuals ([`loss`]), slow reference oracles for testing
//! ([`oracle`]), and JSON checkpoints ([`checkpoint`]).

pub mod boosting;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gbdt;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod optim;
pub mod oracle;
pub mod rnn;

pub use error::{LtrError, Result};
