//! Autoencoder embedding feeding a shared-trunk, per-target-branch graph
//! convolutional regressor for soil greenhouse-gas flux trajectories.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numkit;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};

/// The book chapters, compiled here so their snippets run as doctests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/model.md")]
    pub mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub mod baselines {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
