//! Bootstrap-adaptive experiment design.
//!
//! Bootstrap moment vectors are enclosed in a mean/covariance ellipsoid whose
//! radius is an empirical quantile of their Mahalanobis distances. Coverage is
//! validated on fresh resamples with an exact binomial test, and design points
//! are spread uniformly inside the accepted ellipsoid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inputs::{self, DegeneratePolicy, InputDataset, ModelSpec};
use crate::numkit::{latin_hypercube, Cholesky, JitterLadder, Matrix, SpdMatrix};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "EllipsoidDoc", try_from = "EllipsoidDoc")]
pub struct Ellipsoid {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
    radius2: f64,
    chol: Cholesky,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidDoc {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
    radius2: f64,
    jitter: f64,
}

impl From<Ellipsoid> for EllipsoidDoc {
    fn from(e: Ellipsoid) -> Self {
        Self {
            jitter: e.chol.jitter(),
            center: e.center,
            shape: e.shape,
            radius2: e.radius2,
        }
    }
}

impl TryFrom<EllipsoidDoc> for Ellipsoid {
    type Error = Error;
    fn try_from(doc: EllipsoidDoc) -> Result<Self> {
        let shape = SpdMatrix::from_rows(&doc.shape)?;
        if shape.dim() != doc.center.len() {
            return Err(Error::DimensionMismatch {
                expected: doc.center.len(),
                got: shape.dim(),
            });
        }
        let chol = Cholesky::factor_with_jitter(&shape, doc.jitter)?;
        Ok(Self {
            center: doc.center,
            shape: doc.shape,
            radius2: doc.radius2,
            chol,
        })
    }
}

impl Ellipsoid {
    pub fn new(center: Vec<f64>, shape: Vec<Vec<f64>>, radius2: f64) -> Result<Self> {
        let spd = SpdMatrix::from_rows(&shape)?;
        if spd.dim() != center.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                got: spd.dim(),
            });
        }
        if !(radius2 > 0.0) {
            return Err(Error::InvalidSize("ellipsoid radius must be positive".into()));
        }
        let chol = Cholesky::factor(&spd, &JitterLadder::default()).map_err(|_| Error::SingularCovariance)?;
        Ok(Self {
            center,
            shape,
            radius2,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &[Vec<f64>] {
        &self.shape
    }

    pub fn radius2(&self) -> f64 {
        self.radius2
    }

    /// Squared Mahalanobis distance `(p − c)ᵀ shape⁻¹ (p − c)`.
    pub fn distance2(&self, p: &[f64]) -> f64 {
        let diff: Vec<f64> = p.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.chol.quad_inv(&diff)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && self.distance2(p) <= self.radius2
    }
}

/// Mean/covariance ellipsoid holding a fraction `q` of `samples`.
pub fn build_ellipsoid(samples: &[Vec<f64>], q: f64) -> Result<Ellipsoid> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidSize(format!("coverage fraction {q} not in (0, 1]")));
    }
    let d = samples.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InvalidSize("ellipsoid needs at least one coordinate".into()));
    }
    let n = samples.len();
    if n < d + 2 {
        return Err(Error::TooFewSamples { have: n, need: d + 2 });
    }
    if let Some(p) = samples.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: p.len() });
    }
    let nf = n as f64;
    let center: Vec<f64> = (0..d).map(|j| samples.iter().map(|p| p[j]).sum::<f64>() / nf).collect();
    let mut cov = Matrix::zeros(d, d);
    for p in samples {
        for i in 0..d {
            let di = p[i] - center[i];
            for j in 0..=i {
                cov[(i, j)] += di * (p[j] - center[j]);
            }
        }
    }
    let mut shape = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / (nf - 1.0);
            shape[i][j] = v;
            shape[j][i] = v;
        }
        if shape[i][i] == 0.0 {
            shape[i][i] = 1e-12;
        }
    }
    let spd = SpdMatrix::from_rows(&shape)?;
    let chol = Cholesky::factor(&spd, &JitterLadder::default()).map_err(|_| Error::SingularCovariance)?;
    let mut e = Ellipsoid {
        center,
        shape,
        radius2: 0.0,
        chol,
    };
    let mut dist: Vec<f64> = samples.iter().map(|p| e.distance2(p)).collect();
    dist.sort_by(f64::total_cmp);
    let idx = ((q * nf - 1e-9).ceil() as usize).clamp(1, n);
    e.radius2 = dist[idx - 1].max(f64::MIN_POSITIVE);
    Ok(e)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for i in 1..=n {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
}

/// `P(X ≤ c)` for `X ~ Bin(n, p)`, with `lf` a log-factorial table of length > n.
fn binomial_cdf(n: usize, c: usize, p: f64, lf: &[f64]) -> f64 {
    if c >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=c)
        .map(|k| (lf[n] - lf[k] - lf[n - k] + k as f64 * lp + (n - k) as f64 * lq).exp())
        .sum::<f64>()
        .min(1.0)
}

const MAX_VALIDATION_SIZE: usize = 20_000;

/// Smallest validation size `B1` and threshold `c` for the exact binomial test
/// of `H₀: p ≥ q_null` that rejects when at most `c` resamples are contained.
pub fn coverage_test_plan(q_null: f64, q_alt: f64, type1: f64, power: f64) -> Result<(usize, usize)> {
    if !(q_null > 0.0 && q_null <= 1.0 && q_alt > 0.0) {
        return Err(Error::InvalidSize("coverage fractions must lie in (0, 1]".into()));
    }
    if !(type1 > 0.0 && type1 < 1.0 && power > 0.0 && power < 1.0) {
        return Err(Error::InvalidSize("type I error and power must lie in (0, 1)".into()));
    }
    if q_alt >= q_null {
        return Err(Error::Infeasible(format!(
            "alternative coverage {q_alt} must be below the null coverage {q_null}"
        )));
    }
    let lf = ln_factorials(MAX_VALIDATION_SIZE);
    for b1 in 1..=MAX_VALIDATION_SIZE {
        // largest c whose null rejection probability stays within type1
        let mut lo = 0usize;
        let mut hi = b1;
        if binomial_cdf(b1, 0, q_null, &lf) > type1 {
            continue;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if binomial_cdf(b1, mid, q_null, &lf) <= type1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if binomial_cdf(b1, lo, q_alt, &lf) >= power {
            return Ok((b1, lo));
        }
    }
    Err(Error::Infeasible(format!(
        "no validation size up to {MAX_VALIDATION_SIZE} meets the error constraints"
    )))
}

/// `∫₀^φ sinᵏ t dt`.
fn sin_power_integral(k: u32, phi: f64) -> f64 {
    match k {
        0 => phi,
        1 => 1.0 - phi.cos(),
        _ => {
            let kf = k as f64;
            -phi.sin().powi(k as i32 - 1) * phi.cos() / kf + (kf - 1.0) / kf * sin_power_integral(k - 2, phi)
        }
    }
}

/// Inverse CDF of the density ∝ sinᵏ on `[0, π]`.
fn inverse_sin_power_cdf(k: u32, u: f64) -> f64 {
    let total = sin_power_integral(k, std::f64::consts::PI);
    let target = u * total;
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if sin_power_integral(k, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maps a point of `(0,1)^d` to the unit ball so that uniform inputs give uniform outputs.
fn unit_cube_to_ball(u: &[f64]) -> Vec<f64> {
    let d = u.len();
    if d == 1 {
        return vec![2.0 * u[0] - 1.0];
    }
    let r = u[0].powf(1.0 / d as f64);
    // angles φ_1..φ_{d−2} have density ∝ sin^{d−1−i}; φ_{d−1} is uniform on [0, 2π)
    let mut angles = Vec::with_capacity(d - 1);
    for (i, &ui) in u[1..d - 1].iter().enumerate() {
        angles.push(inverse_sin_power_cdf((d - 2 - i) as u32, ui));
    }
    angles.push(2.0 * std::f64::consts::PI * u[d - 1]);
    let mut x = Vec::with_capacity(d);
    let mut sin_prod = r;
    for a in &angles {
        x.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    x.push(sin_prod);
    x
}

/// `k` points spread uniformly inside `e` (Latin hypercube pushed through the polar map).
pub fn uniform_in_ellipsoid<R: Rng + ?Sized>(e: &Ellipsoid, k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let d = e.dim();
    let cube = latin_hypercube(k, d, rng)?;
    let scale = e.radius2.sqrt();
    let mut points = Vec::with_capacity(k);
    for u in &cube {
        let ball = unit_cube_to_ball(u);
        let mut shrink = 1.0;
        loop {
            let v: Vec<f64> = ball.iter().map(|b| b * scale * shrink).collect();
            let lv = e.chol.lower_mul(&v);
            let p: Vec<f64> = e.center.iter().zip(&lv).map(|(c, l)| c + l).collect();
            if e.contains(&p) {
                points.push(p);
                break;
            }
            // boundary roundoff only
            shrink *= 1.0 - 1e-12;
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignParams {
    pub k: usize,
    /// Total simulation budget `N`, split evenly across the `k` points.
    pub budget: usize,
    pub q: f64,
    pub q_alt: f64,
    pub type1: f64,
    pub power: f64,
    pub b0: usize,
    pub max_rounds: usize,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            k: 20,
            budget: 2000,
            q: 0.99,
            q_alt: 0.97,
            type1: 0.005,
            power: 0.95,
            b0: 1000,
            max_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRound {
    pub samples: usize,
    pub radius2: f64,
    pub validation_size: usize,
    pub contained: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignProvenance {
    pub seed: u64,
    pub params: DesignParams,
    pub threshold: usize,
    pub rounds: Vec<DesignRound>,
    pub redraws: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub points: Vec<Vec<f64>>,
    pub reps: usize,
    pub ellipsoid: Ellipsoid,
    pub provenance: DesignProvenance,
}

/// Full design loop: bootstrap, enclose, validate, refine, then place `k` points.
pub fn make_design(
    dataset: &InputDataset,
    specs: &[ModelSpec],
    params: &DesignParams,
    seed: u64,
    policy: DegeneratePolicy,
) -> Result<ExperimentDesign> {
    if params.k < 2 {
        return Err(Error::InsufficientDesign(params.k));
    }
    let reps = params.budget / params.k;
    if reps < 2 {
        return Err(Error::InvalidSize(format!(
            "budget {} over {} points leaves {reps} replications per point (need 2)",
            params.budget, params.k
        )));
    }
    let (b1, c) = coverage_test_plan(params.q, params.q_alt, params.type1, params.power)?;
    let boot_seed = rng::derive(seed, &[rng::phase::DESIGN]);
    let initial = inputs::bootstrap_range(dataset, specs, 0..params.b0, boot_seed, policy)?;
    let mut redraws = initial.redraws;
    let mut samples: Vec<Vec<f64>> = initial.moments.iter().map(|m| m.flat()).collect();
    let mut next = params.b0;
    let mut rounds = Vec::new();
    let mut accepted = None;
    for _ in 0..params.max_rounds.max(1) {
        let e = build_ellipsoid(&samples, params.q)?;
        let fresh = inputs::bootstrap_range(dataset, specs, next..next + b1, boot_seed, policy)?;
        next += b1;
        redraws += fresh.redraws;
        let fresh: Vec<Vec<f64>> = fresh.moments.iter().map(|m| m.flat()).collect();
        let contained = fresh.iter().filter(|p| e.contains(p)).count();
        let ok = contained > c;
        rounds.push(DesignRound {
            samples: samples.len(),
            radius2: e.radius2,
            validation_size: b1,
            contained,
            accepted: ok,
        });
        log::debug!("design round {}: {contained}/{b1} contained (threshold {c})", rounds.len());
        if ok {
            accepted = Some(e);
            break;
        }
        samples.extend(fresh);
    }
    let ellipsoid = accepted.ok_or(Error::DidNotStabilize(params.max_rounds.max(1)))?;
    let points = uniform_in_ellipsoid(
        &ellipsoid,
        params.k,
        &mut rng::stream(seed, &[rng::phase::DESIGN, rng::phase::DESIGN_POINTS]),
    )?;
    Ok(ExperimentDesign {
        points,
        reps,
        ellipsoid,
        provenance: DesignProvenance {
            seed,
            params: *params,
            threshold: c,
            rounds,
            redraws,
        },
    })
}
