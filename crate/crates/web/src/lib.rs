//! Browser demo bindings.
//!
//! Each export takes plain numbers, runs one toolkit operation and returns a
//! JSON string for the page script to plot.

use mabs::design::{build_ellipsoid, uniform_in_ellipsoid, DesignParams};
use mabs::inputs::{self, DegeneratePolicy, Family, InputDataset, MomentLayout, ModelSpec};
use mabs::kriging::{self, DesignSummary, FitOptions};
use mabs::rng;
use mabs::simulators::{Simulator, Toy};
use mabs::uq::{self, UqConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub beta0: f64,
    pub tau2: f64,
    pub theta: f64,
}

/// Fits a 1-d stochastic-kriging model and evaluates it on `grid` points spanning the design.
///
/// `variances` are per-point output variances, each estimated from `reps` replications.
pub fn kriging_curve(points: &[f64], means: &[f64], variances: &[f64], reps: usize, grid: usize) -> mabs::Result<Curve> {
    let k = points.len();
    let design = DesignSummary::new(points.iter().map(|&p| vec![p]).collect(), means.to_vec(), variances.to_vec(), vec![reps; k])?;
    let model = kriging::fit(design, &FitOptions::default())?;
    let (a, b) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let pad = 0.15 * (b - a);
    let n = grid.max(2);
    let mut out = Curve {
        x: Vec::with_capacity(n),
        mean: Vec::with_capacity(n),
        lo: Vec::with_capacity(n),
        hi: Vec::with_capacity(n),
        beta0: model.beta0(),
        tau2: model.tau2(),
        theta: model.theta()[0],
    };
    for i in 0..n {
        let x = a - pad + (b - a + 2.0 * pad) * i as f64 / (n - 1) as f64;
        let p = model.predict(&[x])?;
        let half = 1.96 * p.variance.sqrt();
        out.x.push(x);
        out.mean.push(p.mean);
        out.lo.push(p.mean - half);
        out.hi.push(p.mean + half);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct EllipsoidDemo {
    pub cloud: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub radius2: f64,
}

/// Bootstraps the (mean, std) of a synthetic normal sample of size `m`, encloses
/// a fraction `q` of the cloud and places `k` uniform design points inside.
pub fn ellipsoid_design(m: usize, b0: usize, q: f64, k: usize, seed: u64) -> mabs::Result<EllipsoidDemo> {
    let specs = vec![ModelSpec::new("x", Family::Normal)];
    let truth = MomentLayout::from_specs(&specs).unflatten(&[10.0, 2.0])?;
    let ds: InputDataset = inputs::synthesize_dataset(&specs, &truth, &[m], seed)?;
    let boot = inputs::bootstrap_moments(&ds, &specs, b0, seed, DegeneratePolicy::default())?;
    let cloud: Vec<Vec<f64>> = boot.moments.iter().map(|v| v.flat()).collect();
    let e = build_ellipsoid(&cloud, q)?;
    let points = uniform_in_ellipsoid(&e, k, &mut rng::stream(seed, &[rng::phase::DESIGN_POINTS]))?;
    Ok(EllipsoidDemo {
        center: e.center().to_vec(),
        shape: e.shape().to_vec(),
        radius2: e.radius2(),
        cloud,
        points,
    })
}

#[derive(Debug, Serialize)]
pub struct UqDemo {
    pub mu_b: Vec<f64>,
    pub m_b: Vec<f64>,
    pub ci0: (f64, f64),
    pub ci_plus: (f64, f64),
    pub sigma2_i: f64,
    pub sigma2_m: f64,
    pub truth: f64,
}

/// Full metamodel-assisted bootstrap on the closed-form toy simulator.
pub fn toy_uq(m: usize, b: usize, budget: usize, seed: u64) -> mabs::Result<UqDemo> {
    let sim = Toy::new(0.5);
    let specs = sim.specs().to_vec();
    let truth = sim.true_moments().expect("toy ships its true moments");
    let ds = inputs::synthesize_dataset(&specs, &truth, &vec![m; specs.len()], seed)?;
    let params = DesignParams { budget, ..DesignParams::default() };
    let cfg = UqConfig { b, alpha: 0.05, seed };
    let run = uq::run_uq(&ds, &specs, &sim, &params, &FitOptions::default(), cfg, DegeneratePolicy::default())?;
    let r = run.result;
    Ok(UqDemo {
        truth: sim.analytic_mean(&truth).expect("toy has a closed form")?,
        ci0: r.ci0,
        ci_plus: r.ci_plus,
        sigma2_i: r.sigma2_i,
        sigma2_m: r.sigma2_m,
        mu_b: r.mu_b,
        m_b: r.m_b,
    })
}

fn to_js<T: Serialize>(r: mabs::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = krigingCurve)]
pub fn kriging_curve_js(points: Vec<f64>, means: Vec<f64>, variances: Vec<f64>, reps: usize, grid: usize) -> Result<String, JsError> {
    to_js(kriging_curve(&points, &means, &variances, reps, grid))
}

#[wasm_bindgen(js_name = ellipsoidDesign)]
pub fn ellipsoid_design_js(m: usize, b0: usize, q: f64, k: usize, seed: u32) -> Result<String, JsError> {
    to_js(ellipsoid_design(m, b0, q, k, u64::from(seed)))
}

#[wasm_bindgen(js_name = toyUq)]
pub fn toy_uq_js(m: usize, b: usize, budget: usize, seed: u32) -> Result<String, JsError> {
    to_js(toy_uq(m, b, budget, u64::from(seed)))
}
