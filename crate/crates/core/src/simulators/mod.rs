//! Stochastic systems behind a common interface, plus their analytic oracles.
//!
//! A simulator maps a moment vector `x` and a replication count `n` to `n`
//! independent outputs `Y_j(x) = μ(x) + ε_j(x)`. Replication `j` always draws
//! from the substream `(seed, REPLICATION, j)`, so outputs do not depend on
//! how replications are scheduled.

mod bioprocess;
mod cell;
mod external;
mod jackson;
mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inputs::{MomentVector, ModelSpec};
use crate::rng::{self, Stream};

pub use bioprocess::{Bioprocess, BioprocessParams};
pub use cell::{CellExpansion, CellParams};
pub use external::External;
pub use jackson::{jackson_analytic, stability_predicate, Jackson, QueueNetConfig};
pub use toy::Toy;

pub trait Simulator: Send + Sync {
    fn name(&self) -> &str;

    /// Input models in the order the simulator expects them.
    fn specs(&self) -> &[ModelSpec];

    fn simulate(&self, x: &MomentVector, n: usize, seed: u64) -> Result<Vec<f64>>;

    /// Moments of the true input distributions, when the simulator ships with them.
    fn true_moments(&self) -> Option<MomentVector> {
        None
    }

    /// Closed-form mean response, when one exists.
    fn analytic_mean(&self, _x: &MomentVector) -> Option<Result<f64>> {
        None
    }
}

const CHUNK: usize = 1024;

/// Runs `n` replications of `one`, each with its own substream, in parallel chunks.
pub fn replicate<F>(n: usize, seed: u64, one: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Stream) -> Result<f64> + Sync + Send,
{
    let chunks: Vec<std::ops::Range<usize>> = (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect();
    let parts = crate::par_map(chunks, |range| {
        range
            .map(|j| one(&mut rng::stream(seed, &[rng::phase::REPLICATION, j as u64])))
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Monte-Carlo estimate of `μ(x)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

pub fn monte_carlo_mean(sim: &dyn Simulator, x: &MomentVector, reps: usize, seed: u64) -> Result<OracleEstimate> {
    if reps < 2 {
        return Err(Error::InvalidSize("oracle needs at least 2 replications".into()));
    }
    let ys = sim.simulate(x, reps, seed)?;
    let mean = crate::numkit::mean(&ys);
    let var = crate::numkit::sample_variance(&ys);
    Ok(OracleEstimate {
        mean,
        std_error: (var / reps as f64).sqrt(),
        reps,
    })
}

/// Named simulator configuration, as it appears in study configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SimulatorConfig {
    Bioprocess {
        #[serde(default)]
        params: BioprocessParams,
    },
    Cell {
        #[serde(default)]
        params: CellParams,
    },
    Jackson {
        #[serde(default)]
        params: QueueNetConfig,
    },
    Toy {
        #[serde(default = "toy::default_noise")]
        noise_scale: f64,
    },
    External {
        command: Vec<String>,
        specs: Vec<ModelSpec>,
    },
}

impl SimulatorConfig {
    pub fn build(&self) -> Result<Box<dyn Simulator>> {
        Ok(match self {
            SimulatorConfig::Bioprocess { params } => Box::new(Bioprocess::new(params.clone())?),
            SimulatorConfig::Cell { params } => Box::new(CellExpansion::new(params.clone())?),
            SimulatorConfig::Jackson { params } => Box::new(Jackson::new(params.clone())?),
            SimulatorConfig::Toy { noise_scale } => Box::new(Toy::new(*noise_scale)),
            SimulatorConfig::External { command, specs } => Box::new(External::new(command.clone(), specs.clone())?),
        })
    }
}

/// Looks a block up by model id, erroring with the id when absent.
pub(crate) fn block<'a>(x: &'a MomentVector, model_id: &str) -> Result<&'a [f64]> {
    x.block(model_id).ok_or_else(|| Error::InvalidMoments {
        model: model_id.to_string(),
        reason: "block missing from moment vector".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replications_do_not_depend_on_count() {
        let f = |r: &mut Stream| -> Result<f64> { Ok(rand::Rng::random::<f64>(r)) };
        let a = replicate(3000, 9, f).unwrap();
        let b = replicate(1500, 9, f).unwrap();
        assert_eq!(&a[..1500], &b[..]);
    }

    #[test]
    fn neighbouring_replications_uncorrelated() {
        let f = |r: &mut Stream| -> Result<f64> { Ok(rand::Rng::random::<f64>(r)) };
        let a = replicate(20_000, 4, f).unwrap();
        let (x, y) = (&a[..a.len() - 1], &a[1..]);
        let (mx, my) = (crate::numkit::mean(x), crate::numkit::mean(y));
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
        let corr = cov / (1.0 / 12.0);
        assert!(corr.abs() < 4.0 / (x.len() as f64).sqrt(), "corr {corr}");
    }
}
