//! Neural-symbolic, coarse-to-fine explainable recommendation over typed
//! knowledge graphs.
//!
//! Entities are embedded as vectors and every relation is a small neural
//! module mapping `(user, predecessor)` to a predicted successor embedding.
//! Recommendation happens in two stages:
//!
//! 1. **Coarse**: per-user metapath values are turned into a path budget and
//!    merged into an abstract meta-layout tree ([`layout`]).
//! 2. **Fine**: the layout is executed over the graph, expanding each partial
//!    path to its best-scored neighbours ([`executor`]). The end items of the
//!    resulting paths are the recommendations, and the paths explain them.
//!
//! Module map:
//!
//! - [`graph`]: typed graph storage, text ingest/emit, metapaths, path sampling.
//! - [`numeric`]: tensors, a reverse-mode tape, SGD and checkpoints.
//! - [`model`]: embeddings, relation modules, the training losses and loop.
//! - [`teacher`]: logistic matrix factorization used to pick ranking negatives.
//! - [`layout`]: heuristic values, budget allocation and layout trees.
//! - [`executor`]: layout execution, ranking and path rendering.
//! - [`eval`]: splits, metrics, the synthetic generator and experiment driver.
//! - [`config`]: key-value run configuration.

pub mod config;
pub mod error;
pub mod eval;
pub mod executor;
pub mod graph;
pub mod layout;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod teacher;

pub use error::{Error, Result};
