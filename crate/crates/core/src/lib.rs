//! Metamodel-assisted bootstrap for stochastic simulation.
//!
//! Fits a stochastic-kriging metamodel over bootstrap-resampled input moments,
//! builds percentile intervals for the true mean response, splits the
//! estimation variance into input-model and simulation parts, and attributes
//! the input-model part to individual models with Shapley values.

pub mod design;
pub mod error;
pub mod inputs;
pub mod kriging;
pub mod numkit;
pub mod rng;
pub mod shapley;
pub mod simulators;
pub mod uq;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};

/// Order-preserving map, parallel when the `parallel` feature is on.
pub(crate) fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
