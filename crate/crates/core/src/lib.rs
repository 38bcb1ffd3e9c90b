//! Self-supervised contrastive attributed graph clustering.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: attributed graphs, file ingestion, symmetric normalisation and
//!   a stochastic block model generator.
//! - [`augment`]: adaptive edge dropping and attribute masking that produce the
//!   two correlated views of every training step.
//! - [`diff`]: a small reverse-mode tape over dense matrices, finite-difference
//!   gradient checking and the Adam update.
//! - [`model`]: the shared GCN encoder with its projection and clustering heads.
//! - [`losses`]: pseudo-label contrastive loss, cluster contrastive loss, the
//!   balance regulariser and NT-Xent.
//! - [`trainer`]: pretraining, the main loop with periodic pseudo-label refresh
//!   and final label extraction.
//! - [`metrics`]: ACC, NMI, ARI, macro-F1, the Hungarian solver and k-means.

pub mod augment;
pub mod diff;
pub mod error;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
