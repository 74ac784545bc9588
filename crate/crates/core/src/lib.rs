//! Social influence locality prediction.
//!
//! Given a social network, an action log, and a focal (ego) user, the library
//! predicts whether the ego will perform an action from the observed statuses
//! of sampled near neighbors and the local network structure. The pipeline:
//!
//! 1. [`graph`] — compressed undirected graph storage and edge-list ingestion.
//! 2. [`feats`] — structural vertex features (coreness, pagerank, HITS,
//!    eigenvector centrality, clustering) and ego-network features.
//! 3. [`data`] — instance generation from action logs, random-walk-with-restart
//!    sampling of fixed-size sub-networks, balancing, splitting, and a
//!    synthetic cascade generator.
//! 4. [`embed`] — random-walk corpora and skip-gram network embeddings.
//! 5. [`autodiff`] — a dense-tensor reverse-mode differentiation engine with
//!    the layer primitives used by the models (instance normalization,
//!    GCN propagation, masked graph attention, multi-head aggregation).
//! 6. [`model`] — the GCN/GAT influence models, mini-batch trainer with
//!    early stopping, prediction, and attention analysis.
//! 7. [`baselines`] — logistic regression, linear SVM, and a patchy
//!    1-D convolutional graph classifier over BFS receptive fields.
//! 8. [`eval`] — rank-based AUC, precision/recall/F1, and report emission.

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod embed;
pub mod error;
pub mod eval;
pub mod feats;
pub mod graph;
pub mod model;
pub mod seeds;

pub use error::{Error, Result};
