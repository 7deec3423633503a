//! Open network of single-server FIFO stations with gamma interarrival and
//! service times and Bernoulli routing, plus its product-form oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{block, replicate, Simulator};
use crate::error::{Error, Result};
use crate::inputs::{block_sampler, project_to_domain, Family, MomentBlock, MomentVector, ModelSpec, Sampler};

/// Where a customer goes after service at one station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRoute {
    /// Bernoulli model deciding the branch; without one every customer goes to `next`.
    #[serde(default)]
    pub branch: Option<String>,
    /// Destination on a successful branch draw (or always); `None` leaves the network.
    #[serde(default)]
    pub next: Option<usize>,
    /// Destination when the branch draw fails; `None` leaves the network.
    #[serde(default)]
    pub otherwise: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueNetConfig {
    pub arrival_model: String,
    /// Station receiving external arrivals.
    pub arrival_station: usize,
    /// One gamma service model per station.
    pub service_models: Vec<String>,
    pub routes: Vec<StationRoute>,
    pub warmup: f64,
    pub run_length: f64,
    /// Customers present at time 0; defaults to the rounded analytic means when stable.
    pub initial_load: Option<Vec<usize>>,
    /// True moments: interarrival and service `(mean, std)`, branch probabilities.
    pub truth: Vec<MomentBlock>,
}

fn route(branch: Option<&str>, next: Option<usize>, otherwise: Option<usize>) -> StationRoute {
    StationRoute {
        branch: branch.map(str::to_string),
        next,
        otherwise,
    }
}

fn mb(id: &str, values: Vec<f64>) -> MomentBlock {
    MomentBlock {
        model_id: id.to_string(),
        values,
    }
}

impl Default for QueueNetConfig {
    /// Four stations: arrivals enter station 0, which feeds 1 or 2; 1 feeds 2 or 3;
    /// 2 feeds 3 or loops back to itself; 3 is the exit.
    fn default() -> Self {
        Self {
            arrival_model: "arrival".into(),
            arrival_station: 0,
            service_models: (1..=4).map(|i| format!("service{i}")).collect(),
            routes: vec![
                route(Some("p1"), Some(1), Some(2)),
                route(Some("p2"), Some(2), Some(3)),
                route(Some("p3"), Some(3), Some(2)),
                route(None, None, None),
            ],
            warmup: 200.0,
            run_length: 20.0,
            initial_load: Some(vec![4, 1, 4, 4]),
            truth: vec![
                mb("arrival", vec![0.25, 0.25]),
                mb("service1", vec![0.2, 0.2]),
                mb("service2", vec![0.2, 0.2]),
                mb("service3", vec![0.2, 0.2]),
                mb("service4", vec![0.2, 0.2]),
                mb("p1", vec![0.5]),
                mb("p2", vec![0.5]),
                mb("p3", vec![0.75]),
            ],
        }
    }
}

impl QueueNetConfig {
    /// Single M/M/1-style station.
    pub fn single(arrival_mean: f64, service_mean: f64) -> Self {
        Self {
            service_models: vec!["service1".into()],
            routes: vec![route(None, None, None)],
            initial_load: None,
            truth: vec![
                mb("arrival", vec![arrival_mean, arrival_mean]),
                mb("service1", vec![service_mean, service_mean]),
            ],
            ..Self::default()
        }
    }

    /// Stations in series, every customer visiting each once.
    pub fn tandem(arrival_mean: f64, service_means: &[f64]) -> Self {
        let k = service_means.len();
        let mut truth = vec![mb("arrival", vec![arrival_mean, arrival_mean])];
        truth.extend(
            service_means
                .iter()
                .enumerate()
                .map(|(i, &m)| mb(&format!("service{}", i + 1), vec![m, m])),
        );
        Self {
            service_models: (1..=k).map(|i| format!("service{i}")).collect(),
            routes: (0..k)
                .map(|i| route(None, (i + 1 < k).then_some(i + 1), None))
                .collect(),
            initial_load: None,
            truth,
            ..Self::default()
        }
    }

    pub fn stations(&self) -> usize {
        self.service_models.len()
    }

    fn branch_models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.routes {
            if let Some(b) = &r.branch {
                if !out.contains(b) {
                    out.push(b.clone());
                }
            }
        }
        out
    }

    pub fn specs(&self) -> Vec<ModelSpec> {
        let mut specs = vec![ModelSpec::new(self.arrival_model.clone(), Family::Gamma)];
        specs.extend(self.service_models.iter().map(|s| ModelSpec::new(s.clone(), Family::Gamma)));
        specs.extend(self.branch_models().into_iter().map(|b| ModelSpec::new(b, Family::Bernoulli)));
        specs
    }

    fn validate(&self) -> Result<()> {
        let k = self.stations();
        if k == 0 || self.routes.len() != k || self.arrival_station >= k {
            return Err(Error::Config("queue network needs one route per station and a valid arrival station".into()));
        }
        for r in &self.routes {
            if r.next.is_some_and(|s| s >= k) || r.otherwise.is_some_and(|s| s >= k) {
                return Err(Error::Config("route points at a missing station".into()));
            }
        }
        if !(self.warmup >= 0.0 && self.run_length > 0.0) {
            return Err(Error::Config("warmup must be nonnegative and run_length positive".into()));
        }
        if let Some(load) = &self.initial_load {
            if load.len() != k {
                return Err(Error::Config("initial_load needs one count per station".into()));
            }
        }
        Ok(())
    }

    /// Routing matrix `R[i][j]` for branch probabilities `p` (ordered as the branch models).
    fn routing_matrix(&self, probs: &[f64]) -> Vec<Vec<f64>> {
        let k = self.stations();
        let names = self.branch_models();
        let mut r = vec![vec![0.0; k]; k];
        for (i, route) in self.routes.iter().enumerate() {
            let p = route
                .branch
                .as_ref()
                .map_or(1.0, |b| probs[names.iter().position(|n| n == b).expect("branch is declared")]);
            if let Some(j) = route.next {
                r[i][j] += p;
            }
            if let Some(j) = route.otherwise {
                r[i][j] += 1.0 - p;
            }
        }
        r
    }

    /// Traffic intensities `ρ_i = λ_i · E[S_i]` from the traffic equations `λ = λ_ext + Rᵀλ`.
    pub fn traffic_intensities(&self, arrival_rate: f64, service_means: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
        let k = self.stations();
        let r = self.routing_matrix(probs);
        let mut a = vec![vec![0.0; k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - r[j][i];
            }
            a[i][k] = if i == self.arrival_station { arrival_rate } else { 0.0 };
        }
        let lambda = solve_augmented(a).ok_or(Error::Unstable {
            station: 0,
            rho: f64::INFINITY,
        })?;
        let mut rho = Vec::with_capacity(k);
        for (i, (l, s)) in lambda.iter().zip(service_means).enumerate() {
            let v = l * s;
            if !(v.is_finite() && *l >= -1e-12) || v >= 1.0 {
                return Err(Error::Unstable { station: i, rho: v });
            }
            rho.push(v.max(0.0));
        }
        Ok(rho)
    }

    fn parse(&self, x: &MomentVector) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let arrival = project_to_domain(block(x, &self.arrival_model)?, &Family::Gamma);
        let services = self
            .service_models
            .iter()
            .map(|s| Ok(project_to_domain(block(x, s)?, &Family::Gamma)[0]))
            .collect::<Result<Vec<f64>>>()?;
        let probs = self
            .branch_models()
            .iter()
            .map(|b| Ok(project_to_domain(block(x, b)?, &Family::Bernoulli)[0]))
            .collect::<Result<Vec<f64>>>()?;
        Ok((1.0 / arrival[0], services, probs))
    }

    pub fn truth(&self) -> MomentVector {
        MomentVector {
            blocks: self.truth.clone(),
        }
    }
}

/// Gaussian elimination with partial pivoting on an `n × (n+1)` augmented system.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..=n {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    Some(x)
}

/// Product-form mean number in system `Σ ρ_i/(1 − ρ_i)`; needs exponential (shape 1) blocks.
pub fn jackson_analytic(config: &QueueNetConfig, x: &MomentVector) -> Result<f64> {
    for id in std::iter::once(&config.arrival_model).chain(&config.service_models) {
        let b = block(x, id)?;
        if (b[0] - b[1]).abs() > 1e-9 * b[0].abs() {
            return Err(Error::InvalidMoments {
                model: id.clone(),
                reason: "product form needs exponential times (std equal to mean)".into(),
            });
        }
    }
    let (rate, services, probs) = config.parse(x)?;
    let rho = config.traffic_intensities(rate, &services, &probs)?;
    Ok(rho.iter().map(|r| r / (1.0 - r)).sum())
}

/// `x ↦ true` when every station's traffic intensity is below 1 at `x`.
pub fn stability_predicate(config: &QueueNetConfig) -> impl Fn(&MomentVector) -> bool + Sync + '_ {
    move |x| {
        config
            .parse(x)
            .and_then(|(rate, s, p)| config.traffic_intensities(rate, &s, &p))
            .is_ok()
    }
}

pub struct Jackson {
    config: QueueNetConfig,
    specs: Vec<ModelSpec>,
}

impl Jackson {
    pub fn new(config: QueueNetConfig) -> Result<Self> {
        config.validate()?;
        let specs = config.specs();
        Ok(Self { config, specs })
    }

    pub fn config(&self) -> &QueueNetConfig {
        &self.config
    }
}

struct Station {
    queue: usize,
    completion: f64,
}

impl Simulator for Jackson {
    fn name(&self) -> &str {
        "jackson"
    }

    fn specs(&self) -> &[ModelSpec] {
        &self.specs
    }

    fn true_moments(&self) -> Option<MomentVector> {
        Some(self.config.truth())
    }

    fn analytic_mean(&self, x: &MomentVector) -> Option<Result<f64>> {
        Some(jackson_analytic(&self.config, x))
    }

    fn simulate(&self, x: &MomentVector, n: usize, seed: u64) -> Result<Vec<f64>> {
        let c = &self.config;
        let k = c.stations();
        let arrival = block_sampler(x, &self.specs[0])?;
        let services: Vec<Sampler> = self.specs[1..=k]
            .iter()
            .map(|s| block_sampler(x, s))
            .collect::<Result<_>>()?;
        let (rate, means, probs) = c.parse(x)?;
        let load = match &c.initial_load {
            Some(l) => l.clone(),
            None => c
                .traffic_intensities(rate, &means, &probs)
                .map(|rho| rho.iter().map(|r| (r / (1.0 - r)).round() as usize).collect())
                .unwrap_or_else(|_| vec![0; k]),
        };
        let names = c.branch_models();
        let branch_p: Vec<Option<f64>> = c
            .routes
            .iter()
            .map(|r| r.branch.as_ref().map(|b| probs[names.iter().position(|n| n == b).unwrap()]))
            .collect();
        let start = c.warmup;
        let end = c.warmup + c.run_length;
        replicate(n, seed, |rng| {
            let mut stations: Vec<Station> = load
                .iter()
                .zip(&services)
                .map(|(&q, s)| Station {
                    queue: q,
                    completion: if q > 0 { s.sample(rng) } else { f64::INFINITY },
                })
                .collect();
            let mut in_system: usize = load.iter().sum();
            let mut next_arrival = arrival.sample(rng);
            let mut now: f64 = 0.0;
            let mut area = 0.0;
            loop {
                let (station, t_done) = stations
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i, s.completion))
                    .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                let t = next_arrival.min(t_done);
                let lo = now.max(start);
                let hi = t.min(end);
                if hi > lo {
                    area += in_system as f64 * (hi - lo);
                }
                if t >= end {
                    break;
                }
                now = t;
                let enter = if next_arrival <= t_done {
                    next_arrival = now + arrival.sample(rng);
                    in_system += 1;
                    Some(c.arrival_station)
                } else {
                    let s = &mut stations[station];
                    s.queue -= 1;
                    s.completion = if s.queue > 0 {
                        now + services[station].sample(rng)
                    } else {
                        f64::INFINITY
                    };
                    let r = &c.routes[station];
                    let dest = match branch_p[station] {
                        Some(p) => {
                            if rng.random::<f64>() < p {
                                r.next
                            } else {
                                r.otherwise
                            }
                        }
                        None => r.next,
                    };
                    if dest.is_none() {
                        in_system -= 1;
                    }
                    dest
                };
                if let Some(j) = enter {
                    let s = &mut stations[j];
                    s.queue += 1;
                    if s.queue == 1 {
                        s.completion = now + services[j].sample(rng);
                    }
                }
            }
            Ok(area / c.run_length)
        })
    }
}
