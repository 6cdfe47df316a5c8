//! Diversified slate recommendation as a linear bandit over modular
//! relevance and pairwise dispersion features.
//!
//! The crate is organised bottom-up:
//!
//! - [`catalog`]: items, marginal features and the set utility.
//! - [`greedy`]: greedy slate construction and the exhaustive oracle.
//! - [`hybrid`] and [`policy`]: the LMDH learner and its baselines.
//! - [`theory`]: exploration scale, regret bound and width budget.
//! - [`env`]: simulated and replayed users, and the episode loop.
//! - [`metrics`]: recall, diversity, F-beta and regret.
//! - [`data`]: rating files, user splits and embeddings.
//! - [`experiments`]: the drivers used by the command-line tool.
//!
//! ```
//! use lmdb_bandit::catalog::{DistanceMetric, ItemCatalog, MetricMode, PreferenceVector};
//! use lmdb_bandit::greedy::greedy_select;
//!
//! let catalog = ItemCatalog::new(
//!     vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]],
//!     vec![DistanceMetric::Cosine(MetricMode::Raw)],
//! )?;
//! let eta = PreferenceVector::new(vec![0.5, 0.4], vec![0.3]);
//! let pick = greedy_select(&eta, &catalog, &[0, 1, 2], 2)?;
//! assert_eq!(pick.slate.items(), &[0, 2]);
//! # Ok::<(), lmdb_bandit::Error>(())
//! ```

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod data;
pub mod env;
pub mod error;
pub mod experiments;
pub mod greedy;
pub mod hybrid;
pub mod metrics;
pub mod policy;
pub mod seed;
pub mod theory;

pub use catalog::{ItemCatalog, ItemId, MarginalGain, PreferenceVector, Slate};
pub use error::{Error, Result};
pub use hybrid::{HybridStatistics, LmdhConfig};
pub use policy::{LmdhPolicy, Policy};

// The guide's chapters, compiled as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/utility.md")]
    mod utility {}
    #[doc = include_str!("../../../book/src/greedy.md")]
    mod greedy {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
