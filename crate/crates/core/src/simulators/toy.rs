//! Closed-form test surface with heteroscedastic normal noise.
//!
//! `μ(x) = 2·m_A + s_A² + 3·p_B + m_C`, observed with noise of standard
//! deviation `noise_scale · (1 + s_A)`.

use rand_distr::{Distribution, StandardNormal};

use super::{block, replicate, Simulator};
use crate::error::Result;
use crate::inputs::{project_to_domain, Family, MomentBlock, MomentVector, ModelSpec};

pub(crate) fn default_noise() -> f64 {
    0.5
}

pub struct Toy {
    noise_scale: f64,
    specs: Vec<ModelSpec>,
}

impl Toy {
    pub fn new(noise_scale: f64) -> Self {
        Self {
            noise_scale,
            specs: vec![
                ModelSpec::new("A", Family::Normal),
                ModelSpec::new("B", Family::Bernoulli),
                ModelSpec::new("C", Family::Gamma),
            ],
        }
    }

    fn parts(&self, x: &MomentVector) -> Result<(f64, f64)> {
        let a = project_to_domain(block(x, "A")?, &Family::Normal);
        let b = project_to_domain(block(x, "B")?, &Family::Bernoulli);
        let c = block(x, "C")?;
        Ok((2.0 * a[0] + a[1] * a[1] + 3.0 * b[0] + c[0], a[1]))
    }
}

impl Simulator for Toy {
    fn name(&self) -> &str {
        "toy"
    }

    fn specs(&self) -> &[ModelSpec] {
        &self.specs
    }

    fn true_moments(&self) -> Option<MomentVector> {
        let blocks = [("A", vec![1.0, 0.5]), ("B", vec![0.3]), ("C", vec![2.0, 1.0])];
        Some(MomentVector {
            blocks: blocks
                .into_iter()
                .map(|(id, values)| MomentBlock {
                    model_id: id.into(),
                    values,
                })
                .collect(),
        })
    }

    fn analytic_mean(&self, x: &MomentVector) -> Option<Result<f64>> {
        Some(self.parts(x).map(|p| p.0))
    }

    fn simulate(&self, x: &MomentVector, n: usize, seed: u64) -> Result<Vec<f64>> {
        let (mu, s_a) = self.parts(x)?;
        let sd = self.noise_scale * (1.0 + s_a);
        replicate(n, seed, |rng| {
            let z: f64 = StandardNormal.sample(rng);
            Ok(mu + sd * z)
        })
    }
}
