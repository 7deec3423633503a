//! Cell-culture expansion: logistic-type growth inhibited by an accumulating
//! metabolite, with a batch extension into a larger vessel part-way through.

use serde::{Deserialize, Serialize};

use super::{block, replicate, Simulator};
use crate::error::{Error, Result};
use crate::inputs::{block_sampler, Family, MomentBlock, MomentVector, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellParams {
    /// Multiplier on the growth and decay rates in one recursion step.
    pub step_scale: f64,
    /// State index (1-based, initial state is 1) after which the batch is extended.
    pub extension_step: usize,
    /// Vessel scale-up factor `λ`.
    pub extension_factor: f64,
    /// Index of the harvested state.
    pub terminal_step: usize,
    /// Whether extension divides the cell density by `λ` as well as the inhibitor.
    pub dilute_density: bool,
    pub k_s: f64,
    pub k_c: f64,
    pub r_d: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            step_scale: 1.0,
            extension_step: 7,
            extension_factor: 4.0,
            terminal_step: 11,
            dilute_density: false,
            k_s: 3.4,
            k_c: 2.6,
            r_d: 0.005,
        }
    }
}

pub const MODEL_IDS: [&str; 7] = ["rho0", "e_rho", "e_I", "r_g", "k_s", "k_c", "r_d"];

pub struct CellExpansion {
    params: CellParams,
    specs: Vec<ModelSpec>,
}

impl CellExpansion {
    pub fn new(params: CellParams) -> Result<Self> {
        if params.extension_step >= params.terminal_step || params.terminal_step < 2 {
            return Err(Error::Config("extension_step must precede terminal_step".into()));
        }
        if !(params.extension_factor >= 1.0) {
            return Err(Error::Config("extension_factor must be at least 1".into()));
        }
        let families = [
            Family::Normal,
            Family::NormalZeroMean,
            Family::NormalZeroMean,
            Family::Normal,
            Family::Degenerate { value: params.k_s },
            Family::Degenerate { value: params.k_c },
            Family::Degenerate { value: params.r_d },
        ];
        let specs = MODEL_IDS
            .iter()
            .zip(families)
            .map(|(id, f)| ModelSpec::new(*id, f))
            .collect();
        Ok(Self { params, specs })
    }
}

impl Simulator for CellExpansion {
    fn name(&self) -> &str {
        "cell"
    }

    fn specs(&self) -> &[ModelSpec] {
        &self.specs
    }

    fn true_moments(&self) -> Option<MomentVector> {
        let values = [vec![3.0, 0.03], vec![0.01], vec![0.01], vec![0.037, 0.008]];
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
        for s in self.specs.iter().filter(|s| !s.is_degenerate()) {
            block(x, &s.model_id)?;
        }
        let rho0 = block_sampler(x, &self.specs[0])?;
        let e_rho = block_sampler(x, &self.specs[1])?;
        let e_i = block_sampler(x, &self.specs[2])?;
        let r_g = block_sampler(x, &self.specs[3])?;
        let p = &self.params;
        let h = p.step_scale;
        let lambda = p.extension_factor;
        replicate(n, seed, |rng| {
            let mut rho = rho0.sample(rng);
            let growth = r_g.sample(rng);
            let mut inhibitor = 0.0;
            for t in 1..p.terminal_step {
                let switch = 1.0 - 1.0 / (1.0 + (p.k_s * (p.k_c - inhibitor)).exp());
                let next = rho + h * growth * rho * switch + e_rho.sample(rng);
                inhibitor += (next - rho) - h * p.r_d * inhibitor + e_i.sample(rng);
                rho = next;
                if t + 1 == p.extension_step {
                    inhibitor /= lambda;
                    if p.dilute_density {
                        rho /= lambda;
                    }
                }
            }
            Ok(rho * lambda)
        })
    }
}
