//! Uncertainty quantification: percentile intervals and variance components.
//!
//! Bootstrap moment vectors carry input-model uncertainty. Evaluating the
//! metamodel mean at each gives `μ_b` (interval CI₀); adding one posterior
//! draw per moment gives `M_b` (interval CI₊), which also carries the
//! remaining metamodel uncertainty.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::{make_design, DesignParams, ExperimentDesign};
use crate::error::{Error, Result};
use crate::inputs::{self, DegeneratePolicy, InputDataset, MomentLayout, MomentVector, ModelSpec};
use crate::kriging::{self, draw_normal, DesignSummary, FitOptions, SkModel};
use crate::numkit;
use crate::rng;
use crate::simulators::Simulator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UqConfig {
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for UqConfig {
    fn default() -> Self {
        Self {
            b: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl UqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if (self.b as f64) < 2.0 / self.alpha {
            return Err(Error::Config(format!(
                "B = {} is below 2/alpha = {}",
                self.b,
                2.0 / self.alpha
            )));
        }
        Ok(())
    }
}

/// 1-based order-statistic indices `(⌈Bα/2⌉, ⌈B(1−α/2)⌉)`.
pub fn percentile_indices(b: usize, alpha: f64) -> (usize, usize) {
    let bf = b as f64;
    let up = |v: f64| (v - 1e-9).ceil() as usize;
    (up(bf * alpha / 2.0), up(bf * (1.0 - alpha / 2.0)))
}

pub fn percentile_interval(samples: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let b = samples.len();
    let (lo, hi) = percentile_indices(b, alpha);
    if lo < 1 || hi > b || lo > hi {
        return Err(Error::TooFewSamples {
            have: b,
            need: (2.0 / alpha).ceil() as usize,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[lo - 1], sorted[hi - 1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UqResult {
    pub ci0: (f64, f64),
    pub ci_plus: (f64, f64),
    pub sigma2_i: f64,
    pub sigma2_m: f64,
    pub sigma2_t: f64,
    pub ratio: f64,
    pub config: UqConfig,
    pub mu_b: Vec<f64>,
    pub sigma2_p: Vec<f64>,
    pub m_b: Vec<f64>,
}

/// Serialized form of [`UqResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqReport {
    pub ci0_lo: f64,
    pub ci0_hi: f64,
    pub ciplus_lo: f64,
    pub ciplus_hi: f64,
    #[serde(rename = "sigma2_I")]
    pub sigma2_i: f64,
    #[serde(rename = "sigma2_M")]
    pub sigma2_m: f64,
    #[serde(rename = "sigma2_T")]
    pub sigma2_t: f64,
    pub ratio: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl UqResult {
    pub fn report(&self) -> UqReport {
        UqReport {
            ci0_lo: self.ci0.0,
            ci0_hi: self.ci0.1,
            ciplus_lo: self.ci_plus.0,
            ciplus_hi: self.ci_plus.1,
            sigma2_i: self.sigma2_i,
            sigma2_m: self.sigma2_m,
            sigma2_t: self.sigma2_t,
            ratio: self.ratio,
            b: self.config.b,
            alpha: self.config.alpha,
            seed: self.config.seed,
        }
    }

    /// Writes `b,mu_b,sigma2_p_b,M_b` rows.
    pub fn write_samples_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["b", "mu_b", "sigma2_p_b", "M_b"])
            .map_err(|e| Error::Config(e.to_string()))?;
        for (b, ((mu, s2), m)) in self.mu_b.iter().zip(&self.sigma2_p).zip(&self.m_b).enumerate() {
            w.write_record([b.to_string(), mu.to_string(), s2.to_string(), m.to_string()])
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Variance components and intervals from per-replicate metamodel outputs.
pub fn summarize(mu_b: Vec<f64>, sigma2_p: Vec<f64>, m_b: Vec<f64>, config: UqConfig) -> Result<UqResult> {
    let ci0 = percentile_interval(&mu_b, config.alpha)?;
    let ci_plus = percentile_interval(&m_b, config.alpha)?;
    let sigma2_i = numkit::sample_variance(&mu_b);
    let sigma2_m = numkit::mean(&sigma2_p);
    let sigma2_t = numkit::sample_variance(&m_b);
    let ratio = if sigma2_t > 0.0 {
        (sigma2_i / sigma2_t).sqrt()
    } else {
        f64::NAN
    };
    if ratio > 1.0 {
        log::warn!("sigma_I/sigma_T = {ratio:.4} exceeds 1 (sampling noise in both estimates)");
    }
    Ok(UqResult {
        ci0,
        ci_plus,
        sigma2_i,
        sigma2_m,
        sigma2_t,
        ratio,
        config,
        mu_b,
        sigma2_p,
        m_b,
    })
}

/// Propagates the given bootstrap moments (flat coordinates) through `model`.
pub fn uq_from_moments(model: &SkModel, moments: &[Vec<f64>], config: UqConfig) -> Result<UqResult> {
    config.validate()?;
    if moments.len() != config.b {
        return Err(Error::DimensionMismatch {
            expected: config.b,
            got: moments.len(),
        });
    }
    let indexed: Vec<(usize, &Vec<f64>)> = moments.iter().enumerate().collect();
    let rows = crate::par_map(indexed, |(b, x)| -> Result<(f64, f64, f64)> {
        let p = model.predict(x)?;
        let mut r = rng::stream(config.seed, &[rng::phase::POSTERIOR, b as u64]);
        Ok((p.mean, p.variance, draw_normal(p, &mut r)))
    });
    let mut mu_b = Vec::with_capacity(rows.len());
    let mut sigma2_p = Vec::with_capacity(rows.len());
    let mut m_b = Vec::with_capacity(rows.len());
    for r in rows {
        let (m, v, d) = r?;
        mu_b.push(m);
        sigma2_p.push(v);
        m_b.push(d);
    }
    summarize(mu_b, sigma2_p, m_b, config)
}

/// Bootstraps `config.b` moment vectors and propagates them through `model`.
pub fn uq_from_model(
    model: &SkModel,
    dataset: &InputDataset,
    specs: &[ModelSpec],
    config: UqConfig,
    policy: DegeneratePolicy,
) -> Result<UqResult> {
    config.validate()?;
    let boot = inputs::bootstrap_moments(dataset, specs, config.b, config.seed, policy)?;
    let flat: Vec<Vec<f64>> = boot.moments.iter().map(MomentVector::flat).collect();
    uq_from_moments(model, &flat, config)
}

/// Checks that `specs` declare the models `sim` expects, in order.
pub fn check_specs(sim: &dyn Simulator, specs: &[ModelSpec]) -> Result<()> {
    let want = sim.specs();
    let same = want.len() == specs.len()
        && want.iter().zip(specs).all(|(a, b)| {
            a.model_id == b.model_id && a.family.moment_count() == b.family.moment_count() && a.is_degenerate() == b.is_degenerate()
        });
    if same {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "specs do not match the `{}` simulator's input models ({})",
            sim.name(),
            want.iter().map(|s| s.model_id.as_str()).collect::<Vec<_>>().join(", ")
        )))
    }
}

/// Runs `reps` replications at every design point; point `i` uses seed `(seed, SIMULATE, i)`.
pub fn simulate_design(
    sim: &dyn Simulator,
    layout: &MomentLayout,
    points: &[Vec<f64>],
    reps: usize,
    seed: u64,
) -> Result<DesignSummary> {
    let mut outputs = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let x = layout.unflatten(p)?;
        outputs.push(sim.simulate(&x, reps, rng::derive(seed, &[rng::phase::SIMULATE, i as u64]))?);
    }
    DesignSummary::from_outputs(points.to_vec(), &outputs)
}

#[derive(Debug, Clone)]
pub struct UqRun {
    pub design: ExperimentDesign,
    pub model: SkModel,
    pub result: UqResult,
}

/// Design, simulate, fit, then propagate bootstrap moments, all from `config.seed`.
pub fn run_uq(
    dataset: &InputDataset,
    specs: &[ModelSpec],
    sim: &dyn Simulator,
    design_params: &DesignParams,
    fit_options: &FitOptions,
    config: UqConfig,
    policy: DegeneratePolicy,
) -> Result<UqRun> {
    config.validate()?;
    check_specs(sim, specs)?;
    dataset.validate(specs)?;
    let layout = MomentLayout::from_specs(specs);
    let design = make_design(dataset, specs, design_params, config.seed, policy)?;
    let summary = simulate_design(sim, &layout, &design.points, design.reps, config.seed)?;
    let model = kriging::fit(
        summary,
        &FitOptions {
            seed: config.seed,
            ..*fit_options
        },
    )?;
    let result = uq_from_model(&model, dataset, specs, config, policy)?;
    Ok(UqRun { design, model, result })
}

/// Fraction of moment vectors for which `unstable` holds.
pub fn unstable_fraction<F: Fn(&MomentVector) -> bool>(moments: &[MomentVector], unstable: F) -> f64 {
    if moments.is_empty() {
        return 0.0;
    }
    moments.iter().filter(|x| unstable(x)).count() as f64 / moments.len() as f64
}

/// Reference mode without a metamodel: `n` fresh replications at each of `B` bootstrap moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectBootstrap {
    pub means: Vec<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn direct_bootstrap(
    dataset: &InputDataset,
    specs: &[ModelSpec],
    sim: &dyn Simulator,
    reps: usize,
    config: UqConfig,
    policy: DegeneratePolicy,
) -> Result<DirectBootstrap> {
    config.validate()?;
    check_specs(sim, specs)?;
    let boot = inputs::bootstrap_moments(dataset, specs, config.b, config.seed, policy)?;
    let means = boot
        .moments
        .iter()
        .enumerate()
        .map(|(b, x)| {
            let ys = sim.simulate(x, reps, rng::derive(config.seed, &[rng::phase::SIMULATE, u64::MAX, b as u64]))?;
            Ok(numkit::mean(&ys))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (ci_lo, ci_hi) = percentile_interval(&means, config.alpha)?;
    Ok(DirectBootstrap { means, ci_lo, ci_hi })
}
