//! Biomanufacturing chain: fermentation growth, centrifuge, chromatography,
//! filtration and a purity check on the final batch.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{block, replicate, Simulator};
use crate::error::{Error, Result};
use crate::inputs::{block_sampler, Family, MomentBlock, MomentVector, ModelSpec, Sampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BioprocessParams {
    /// Harvest time `T` (hours).
    pub harvest_time: f64,
    /// Initial impurity `I₀`.
    pub initial_impurity: f64,
    /// Maximum impurity fraction `ω` accepted by quality control.
    pub omega: f64,
    /// Cap on redraws of a nonpositive protein or impurity variate.
    pub max_redraws: usize,
}

impl Default for BioprocessParams {
    fn default() -> Self {
        Self {
            harvest_time: 54.0,
            initial_impurity: 14.64,
            omega: 0.25,
            max_redraws: 1000,
        }
    }
}

pub const MODEL_IDS: [&str; 8] = ["eps_P", "gamma", "X0", "eps_I", "Q", "Q_p", "Q_I", "Q_fr"];

pub struct Bioprocess {
    params: BioprocessParams,
    specs: Vec<ModelSpec>,
}

impl Bioprocess {
    pub fn new(params: BioprocessParams) -> Result<Self> {
        if !(params.harvest_time > 0.0) {
            return Err(Error::Config("harvest_time must be positive".into()));
        }
        if !(params.omega >= 0.0 && params.omega < 1.0) {
            return Err(Error::Config("omega must lie in [0, 1)".into()));
        }
        let families = [
            Family::NormalZeroMean,
            Family::Normal,
            Family::Normal,
            Family::NormalZeroMean,
            Family::Uniform,
            Family::Uniform,
            Family::Uniform,
            Family::Uniform,
        ];
        let specs = MODEL_IDS
            .iter()
            .zip(families)
            .map(|(id, f)| ModelSpec::new(*id, f))
            .collect();
        Ok(Self { params, specs })
    }

    pub fn params(&self) -> &BioprocessParams {
        &self.params
    }
}

fn uniform_moments(lo: f64, hi: f64) -> Vec<f64> {
    vec![(lo + hi) / 2.0, (hi - lo) / 12f64.sqrt()]
}

struct Draws {
    eps_p: Sampler,
    gamma: Sampler,
    x0: Sampler,
    eps_i: Sampler,
    q: Sampler,
    q_p: Sampler,
    q_i: Sampler,
    q_fr: Sampler,
}

impl Simulator for Bioprocess {
    fn name(&self) -> &str {
        "bioprocess"
    }

    fn specs(&self) -> &[ModelSpec] {
        &self.specs
    }

    fn true_moments(&self) -> Option<MomentVector> {
        let values = [
            vec![0.4918],
            vec![0.0475, 0.008],
            vec![15.98, 4.17],
            vec![0.4918],
            uniform_moments(0.4, 0.5),
            uniform_moments(0.4833, 0.5907),
            uniform_moments(0.1458, 0.1782),
            uniform_moments(0.99, 1.0),
        ];
        Some(MomentVector {
            blocks: MODEL_IDS
                .iter()
                .zip(values)
                .map(|(id, v)| MomentBlock {
                    model_id: id.to_string(),
                    values: v,
                })
                .collect(),
        })
    }

    fn simulate(&self, x: &MomentVector, n: usize, seed: u64) -> Result<Vec<f64>> {
        for s in &self.specs {
            block(x, &s.model_id)?;
        }
        let s = |i: usize| block_sampler(x, &self.specs[i]);
        let d = Draws {
            eps_p: s(0)?,
            gamma: s(1)?,
            x0: s(2)?,
            eps_i: s(3)?,
            q: s(4)?,
            q_p: s(5)?,
            q_i: s(6)?,
            q_fr: s(7)?,
        };
        let p = &self.params;
        let redraws = AtomicUsize::new(0);
        let positive = |sampler: &dyn Fn(&mut crate::rng::Stream) -> f64,
                        rng: &mut crate::rng::Stream,
                        what: &str|
         -> Result<f64> {
            for attempt in 0..=p.max_redraws {
                let v = sampler(rng);
                if v > 0.0 {
                    if attempt > 0 {
                        redraws.fetch_add(attempt, Ordering::Relaxed);
                    }
                    return Ok(v);
                }
            }
            Err(Error::Simulator(format!(
                "{what} stayed nonpositive after {} redraws",
                p.max_redraws
            )))
        };
        let out = replicate(n, seed, |rng| {
            let gamma = d.gamma.sample(rng);
            let growth = (gamma * p.harvest_time).exp();
            let x0 = positive(&|r| d.x0.sample(r), rng, "initial biomass")?;
            let x_f = positive(&|r| x0 * growth + d.eps_p.sample(r), rng, "harvested protein")?;
            let i_f = positive(
                &|r| p.initial_impurity * growth + d.eps_i.sample(r),
                rng,
                "harvested impurity",
            )?;
            let i_c = d.q.sample(rng) * i_f;
            let x_p = d.q_p.sample(rng) * x_f;
            let i_p = d.q_i.sample(rng) * i_c;
            let i_fr = d.q_fr.sample(rng) * i_p;
            let x_fr = x_p;
            Ok(if i_fr / (x_fr + i_fr) <= p.omega { x_fr } else { 0.0 })
        })?;
        let r = redraws.into_inner();
        if r > 0 {
            log::info!("bioprocess: {r} nonpositive variates redrawn over {n} replications");
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deterministic_truth(sim: &Bioprocess) -> MomentVector {
        let mut x = sim.true_moments().unwrap();
        for b in &mut x.blocks {
            let last = b.values.len() - 1;
            b.values[last] = 0.0;
        }
        x
    }

    #[test]
    fn zero_spread_follows_the_chain() {
        let sim = Bioprocess::new(BioprocessParams::default()).unwrap();
        let x = deterministic_truth(&sim);
        let ys = sim.simulate(&x, 5, 1).unwrap();
        let growth = (0.0475f64 * 54.0).exp();
        let x_fr = 15.98 * growth * (0.4833 + 0.5907) / 2.0;
        let i_fr = 14.64 * growth * 0.45 * 0.162 * 0.995;
        assert!(i_fr / (x_fr + i_fr) <= 0.25);
        for y in ys {
            assert!((y - x_fr).abs() < 1e-9 * x_fr);
        }
    }

    #[test]
    fn zero_threshold_discards_every_batch() {
        let sim = Bioprocess::new(BioprocessParams {
            omega: 0.0,
            ..Default::default()
        })
        .unwrap();
        let ys = sim.simulate(&sim.true_moments().unwrap(), 200, 3).unwrap();
        assert!(ys.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let sim = Bioprocess::new(BioprocessParams::default()).unwrap();
        let x = sim.true_moments().unwrap();
        assert_eq!(sim.simulate(&x, 100, 5).unwrap(), sim.simulate(&x, 100, 5).unwrap());
        assert_ne!(sim.simulate(&x, 100, 5).unwrap(), sim.simulate(&x, 100, 6).unwrap());
    }
}
