//! Stochastic kriging with a constant trend and product-form Gaussian correlation.
//!
//! The response surface is modeled as `β₀ + M(x)` where `M` is a zero-mean
//! Gaussian process with covariance `τ² exp(−Σ θ_j (x_j − x'_j)²)`. Simulation
//! noise at design point `i` enters as the plug-in variance `S²(x_i)/n_i` on
//! the diagonal. `(τ², θ)` are fitted by maximum likelihood with `β₀`
//! profiled out by generalized least squares.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, Cholesky, JitterLadder, Matrix, NelderMeadOptions, SpdMatrix};
use crate::rng;

/// Replicated simulation results at the design points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub points: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub reps: Vec<usize>,
}

impl DesignSummary {
    pub fn new(points: Vec<Vec<f64>>, means: Vec<f64>, variances: Vec<f64>, reps: Vec<usize>) -> Result<Self> {
        let k = points.len();
        if k < 2 {
            return Err(Error::InsufficientDesign(k));
        }
        for len in [means.len(), variances.len(), reps.len()] {
            if len != k {
                return Err(Error::DimensionMismatch { expected: k, got: len });
            }
        }
        let d = points[0].len();
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
        }
        if let Some(&n) = reps.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidSize(format!(
                "every design point needs at least 2 replications (got {n})"
            )));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidSize("design outputs must be finite".into()));
        }
        Ok(Self {
            points,
            means,
            variances,
            reps,
        })
    }

    /// Summarizes raw replications (sample mean and `n − 1` variance per point).
    pub fn from_outputs(points: Vec<Vec<f64>>, outputs: &[Vec<f64>]) -> Result<Self> {
        let means = outputs.iter().map(|o| numkit::mean(o)).collect();
        let variances = outputs.iter().map(|o| numkit::sample_variance(o)).collect();
        let reps = outputs.iter().map(Vec::len).collect();
        Self::new(points, means, variances, reps)
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Plug-in noise variances `S²(x_i)/n_i` of the sample means.
    pub fn noise(&self) -> Vec<f64> {
        self.variances
            .iter()
            .zip(&self.reps)
            .map(|(v, &n)| v / n as f64)
            .collect()
    }
}

/// `exp(−Σ θ_j (x_j − x'_j)²)`.
pub fn gaussian_correlation(x: &[f64], x2: &[f64], theta: &[f64]) -> Result<f64> {
    if x.len() != x2.len() || x.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: if x.len() != theta.len() { x.len() } else { x2.len() },
        });
    }
    Ok(correlation(x, x2, theta))
}

fn correlation(x: &[f64], x2: &[f64], theta: &[f64]) -> f64 {
    let s: f64 = x
        .iter()
        .zip(x2)
        .zip(theta)
        .map(|((a, b), t)| t * (a - b) * (a - b))
        .sum();
    (-s).exp()
}

fn covariance_matrix(points: &[Vec<f64>], noise: &[f64], tau2: f64, theta: &[f64]) -> SpdMatrix {
    let k = points.len();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        m[(i, i)] = tau2 + noise[i];
        for j in 0..i {
            let c = tau2 * correlation(&points[i], &points[j], theta);
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    SpdMatrix::new(m).expect("covariance is symmetric by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Bounds on θ_j expressed in range-normalized coordinates, i.e. on `θ_j · range_j²`.
    pub theta_bounds: (f64, f64),
    pub multistarts: usize,
    pub jitter: JitterLadder,
    pub optimizer: NelderMeadOptions,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            theta_bounds: (1e-6, 1e4),
            multistarts: 5,
            jitter: JitterLadder::default(),
            optimizer: NelderMeadOptions {
                max_iters: 3000,
                tol: 1e-6,
                restarts: 1,
                initial_step: 0.5,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone)]
struct Cache {
    chol: Cholesky,
    weights: Vec<f64>,
    ones_solve: Vec<f64>,
    ones_quad: f64,
}

/// Fitted stochastic-kriging metamodel. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "SkModelDoc", try_from = "SkModelDoc")]
pub struct SkModel {
    beta0: f64,
    tau2: f64,
    theta: Vec<f64>,
    noise: Vec<f64>,
    design: DesignSummary,
    jitter: f64,
    log_likelihood: f64,
    cache: Cache,
}

#[derive(Serialize, Deserialize)]
struct SkModelDoc {
    beta0: f64,
    tau2: f64,
    theta: Vec<f64>,
    #[serde(rename = "C")]
    noise: Vec<f64>,
    design_points: Vec<Vec<f64>>,
    means: Vec<f64>,
    variances: Vec<f64>,
    reps: Vec<usize>,
    jitter: f64,
    log_likelihood: f64,
}

impl From<SkModel> for SkModelDoc {
    fn from(m: SkModel) -> Self {
        Self {
            beta0: m.beta0,
            tau2: m.tau2,
            theta: m.theta,
            noise: m.noise,
            design_points: m.design.points,
            means: m.design.means,
            variances: m.design.variances,
            reps: m.design.reps,
            jitter: m.jitter,
            log_likelihood: m.log_likelihood,
        }
    }
}

impl TryFrom<SkModelDoc> for SkModel {
    type Error = Error;
    fn try_from(doc: SkModelDoc) -> Result<Self> {
        let design = DesignSummary::new(doc.design_points, doc.means, doc.variances, doc.reps)?;
        if doc.noise.len() != design.k() {
            return Err(Error::DimensionMismatch {
                expected: design.k(),
                got: doc.noise.len(),
            });
        }
        let mut m = SkModel::assemble(design, doc.noise, doc.tau2, doc.theta, doc.jitter, Some(doc.beta0))?;
        m.log_likelihood = doc.log_likelihood;
        Ok(m)
    }
}

/// Outcome of the likelihood search, for diagnostics.
#[derive(Debug, Clone)]
pub struct FitReport {
    /// Log-likelihood at each multistart's initial point.
    pub start_log_likelihoods: Vec<f64>,
    pub best_log_likelihood: f64,
    pub evaluations: usize,
}

struct Likelihood {
    nll: f64,
}

fn negative_log_likelihood(
    design: &DesignSummary,
    noise: &[f64],
    tau2: f64,
    theta: &[f64],
    ladder: &JitterLadder,
) -> Option<Likelihood> {
    let k = design.k();
    let cov = covariance_matrix(&design.points, noise, tau2, theta);
    let chol = Cholesky::factor(&cov, ladder).ok()?;
    let ones = vec![1.0; k];
    let a = chol.solve(&ones);
    let s: f64 = a.iter().sum();
    let beta0 = a.iter().zip(&design.means).map(|(a, y)| a * y).sum::<f64>() / s;
    let resid: Vec<f64> = design.means.iter().map(|y| y - beta0).collect();
    let quad = chol.quad_inv(&resid);
    let nll = 0.5 * (chol.log_det() + quad + k as f64 * (2.0 * std::f64::consts::PI).ln());
    nll.is_finite().then_some(Likelihood { nll })
}

impl SkModel {
    /// Builds a model with fixed `(τ², θ)`; `β₀` is the GLS estimate unless supplied.
    pub fn with_hyperparameters(
        design: DesignSummary,
        tau2: f64,
        theta: Vec<f64>,
        ladder: &JitterLadder,
    ) -> Result<Self> {
        let noise = design.noise();
        let cov = covariance_matrix(&design.points, &noise, tau2, &theta);
        let jitter = Cholesky::factor(&cov, ladder)?.jitter();
        let mut m = Self::assemble(design, noise, tau2, theta, jitter, None)?;
        m.log_likelihood = -negative_log_likelihood(&m.design, &m.noise, tau2, &m.theta, ladder)
            .map_or(f64::INFINITY, |l| l.nll);
        Ok(m)
    }

    fn assemble(
        design: DesignSummary,
        noise: Vec<f64>,
        tau2: f64,
        theta: Vec<f64>,
        jitter: f64,
        beta0: Option<f64>,
    ) -> Result<Self> {
        if theta.len() != design.dim() {
            return Err(Error::DimensionMismatch {
                expected: design.dim(),
                got: theta.len(),
            });
        }
        if !(tau2 > 0.0) || theta.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidSize("tau2 must be positive and theta nonnegative".into()));
        }
        let k = design.k();
        let cov = covariance_matrix(&design.points, &noise, tau2, &theta);
        let chol = Cholesky::factor_with_jitter(&cov, jitter)?;
        let ones_solve = chol.solve(&vec![1.0; k]);
        let ones_quad: f64 = ones_solve.iter().sum();
        let beta0 = beta0.unwrap_or_else(|| {
            ones_solve.iter().zip(&design.means).map(|(a, y)| a * y).sum::<f64>() / ones_quad
        });
        let resid: Vec<f64> = design.means.iter().map(|y| y - beta0).collect();
        let weights = chol.solve(&resid);
        Ok(Self {
            beta0,
            tau2,
            theta,
            noise,
            design,
            jitter,
            log_likelihood: f64::NAN,
            cache: Cache {
                chol,
                weights,
                ones_solve,
                ones_quad,
            },
        })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn design(&self) -> &DesignSummary {
        &self.design
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Conditional mean `m_p(x)` and variance `σ²_p(x)`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let r: Vec<f64> = self
            .design
            .points
            .iter()
            .map(|p| self.tau2 * correlation(x, p, &self.theta))
            .collect();
        let mean = self.beta0 + dot(&r, &self.cache.weights);
        let explained = self.cache.chol.quad_inv(&r);
        let eta = 1.0 - dot(&self.cache.ones_solve, &r);
        let raw = self.tau2 - explained + eta * eta / self.cache.ones_quad;
        let variance = if raw < 0.0 {
            if -raw > 1e-8 * self.tau2 {
                log::warn!("predictive variance {raw:e} clamped to 0 (tau2 = {:e})", self.tau2);
            }
            0.0
        } else {
            raw
        };
        Ok(Prediction { mean, variance })
    }

    /// `m_p(x)` only; skips the variance solve.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let s: f64 = self
            .design
            .points
            .iter()
            .zip(&self.cache.weights)
            .map(|(p, w)| self.tau2 * correlation(x, p, &self.theta) * w)
            .sum();
        Ok(self.beta0 + s)
    }

    /// One draw from `N(m_p(x), σ²_p(x))`.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(draw_normal(p, rng))
    }
}

pub(crate) fn draw_normal<R: Rng + ?Sized>(p: Prediction, rng: &mut R) -> f64 {
    if p.variance == 0.0 {
        return p.mean;
    }
    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
    p.mean + p.variance.sqrt() * z
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum-likelihood fit of `(τ², θ)`; best of the multistarts is kept.
pub fn fit(design: DesignSummary, options: &FitOptions) -> Result<SkModel> {
    fit_with_report(design, options).map(|(m, _)| m)
}

pub fn fit_with_report(design: DesignSummary, options: &FitOptions) -> Result<(SkModel, FitReport)> {
    let k = design.k();
    if k < 2 {
        return Err(Error::InsufficientDesign(k));
    }
    let d = design.dim();
    let noise = design.noise();

    let ranges: Vec<f64> = (0..d)
        .map(|j| {
            let (lo, hi) = design
                .points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[j]), hi.max(p[j])));
            let r = hi - lo;
            if r > 0.0 && r.is_finite() {
                r
            } else {
                1.0
            }
        })
        .collect();
    let var_y = numkit::sample_variance(&design.means);
    let tau_ref = if var_y > 0.0 {
        var_y
    } else {
        let mean_noise = numkit::mean(&noise);
        if mean_noise > 0.0 {
            mean_noise
        } else {
            1.0
        }
    };
    let tau_bounds = ((tau_ref * 1e-8).ln(), (tau_ref * 1e4).ln());
    let theta_bounds = (options.theta_bounds.0.ln(), options.theta_bounds.1.ln());

    // parameters: [ln τ², ln(θ_j · range_j²)]
    let unpack = |p: &[f64]| -> (f64, Vec<f64>, f64) {
        let mut excess = 0.0;
        let mut clamp = |v: f64, (lo, hi): (f64, f64)| {
            let c = v.clamp(lo, hi);
            excess += (v - c) * (v - c);
            c
        };
        let tau2 = clamp(p[0], tau_bounds).exp();
        let theta = p[1..]
            .iter()
            .zip(&ranges)
            .map(|(&v, r)| clamp(v, theta_bounds).exp() / (r * r))
            .collect();
        (tau2, theta, excess)
    };
    let objective = |p: &[f64]| -> f64 {
        let (tau2, theta, excess) = unpack(p);
        match negative_log_likelihood(&design, &noise, tau2, &theta, &options.jitter) {
            Some(l) => l.nll + 1e3 * excess,
            None => f64::INFINITY,
        }
    };

    let mut starts = Vec::with_capacity(options.multistarts.max(1));
    let mut base = vec![tau_ref.ln()];
    base.extend(std::iter::repeat(0.0).take(d));
    starts.push(base.clone());
    let mut rng = rng::stream(options.seed, &[rng::phase::FIT]);
    for _ in 1..options.multistarts.max(1) {
        let mut s = base.clone();
        s[0] += rng.random_range(-2.0..2.0);
        for v in s.iter_mut().skip(1) {
            *v = rng.random_range(-3.0..3.0);
        }
        starts.push(s);
    }
    let start_log_likelihoods: Vec<f64> = starts.iter().map(|s| -objective(s)).collect();

    let reports = crate::par_map(starts, |s| numkit::nelder_mead(&objective, &s, &options.optimizer));
    let mut best: Option<numkit::OptimizerReport> = None;
    let mut evaluations = 0;
    for r in reports {
        match r {
            Ok(r) => {
                evaluations += r.evaluations;
                if best.as_ref().map_or(true, |b| r.fmin < b.fmin) {
                    best = Some(r);
                }
            }
            Err(Error::NonFiniteObjective) => continue,
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or(Error::NotPositiveDefinite { jitter: f64::NAN })?;
    let (tau2, theta, _) = unpack(&best.argmin);
    let cov = covariance_matrix(&design.points, &noise, tau2, &theta);
    let jitter = Cholesky::factor(&cov, &options.jitter)?.jitter();
    let nll = negative_log_likelihood(&design, &noise, tau2, &theta, &options.jitter)
        .ok_or(Error::NotPositiveDefinite { jitter })?
        .nll;
    let mut model = SkModel::assemble(design, noise, tau2, theta, jitter, None)?;
    model.log_likelihood = -nll;
    let report = FitReport {
        start_log_likelihoods,
        best_log_likelihood: -nll,
        evaluations,
    };
    Ok((model, report))
}
