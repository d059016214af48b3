//! Core kernels for a knowledge-graph recommender that scores items by
//! message passing over a pruned, user-centric computation graph.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, caches,
//! thread pools and the command line live in the `kucnet` companion crate.
//!
//! Pipeline overview:
//! - [`ckg`] merges user-item interactions and knowledge-graph triples into a
//!   reverse-closed collaborative knowledge graph.
//! - [`ppr`] computes personalized PageRank scores per user by power iteration.
//! - [`subgraph`] grows layered user-centric computation graphs and prunes them
//!   to the top-K edges per head node.
//! - [`model`] runs attention message passing over a layered graph and
//!   differentiates it by hand.
//! - [`train`] optimizes the model with a pairwise ranking loss and Adam.
//! - [`eval`] ranks all items per user and reports recall@N / ndcg@N.
//! - [`explain`] extracts attention-filtered explanation subgraphs.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod ckg;
pub mod error;
pub mod eval;
pub mod exec;
pub mod explain;
pub mod gradcheck;
pub mod model;
pub mod ppr;
mod rng;
pub mod split;
pub mod subgraph;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
