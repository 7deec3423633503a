//! Input models: family declarations, moment estimation and bootstrap resampling.
//!
//! Each of the `L` input models is summarized by its first `h` standardized
//! moments (mean and standard deviation for two-parameter families, the
//! single parameter otherwise). Stacking the blocks in declaration order
//! gives the moment vector that the metamodel is built over.

mod io;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub use io::{read_dataset_csv, read_specs_json, write_dataset_csv};

/// Distribution family of one input model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Normal with unknown mean and standard deviation.
    Normal,
    /// Normal residual with mean pinned at zero; only the standard deviation is estimated.
    NormalZeroMean,
    /// Uniform, parameterized by its mean and standard deviation.
    Uniform,
    Bernoulli,
    /// Gamma, parameterized by its mean and standard deviation.
    Gamma,
    /// Point mass; contributes no coordinates and is never resampled.
    Degenerate { value: f64 },
}

impl Family {
    /// Number of moments `h` that characterize the family.
    pub fn moment_count(&self) -> usize {
        match self {
            Family::Normal | Family::Uniform | Family::Gamma => 2,
            Family::NormalZeroMean | Family::Bernoulli => 1,
            Family::Degenerate { .. } => 0,
        }
    }

    fn has_std(&self) -> bool {
        !matches!(self, Family::Bernoulli | Family::Degenerate { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    #[serde(flatten)]
    pub family: Family,
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>, family: Family) -> Self {
        Self {
            model_id: model_id.into(),
            family,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.family, Family::Degenerate { .. })
    }
}

/// Real-world samples per input model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputDataset {
    samples: BTreeMap<String, Vec<f64>>,
}

impl InputDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model_id: impl Into<String>, values: Vec<f64>) {
        self.samples.insert(model_id.into(), values);
    }

    pub fn push(&mut self, model_id: &str, value: f64) {
        self.samples.entry(model_id.to_string()).or_default().push(value);
    }

    pub fn get(&self, model_id: &str) -> Option<&[f64]> {
        self.samples.get(model_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.samples.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Data for `spec`, checked against the family's support.
    pub fn model_data(&self, spec: &ModelSpec) -> Result<&[f64]> {
        let data = self
            .get(&spec.model_id)
            .filter(|d| !d.is_empty())
            .ok_or_else(|| Error::EmptyModelData(spec.model_id.clone()))?;
        let bad = |reason: &str| Error::InvalidData {
            model: spec.model_id.clone(),
            reason: reason.to_string(),
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite observation"));
        }
        match spec.family {
            Family::Bernoulli if data.iter().any(|&v| v != 0.0 && v != 1.0) => {
                Err(bad("bernoulli observations must be 0 or 1"))
            }
            Family::Gamma if data.iter().any(|&v| v <= 0.0) => {
                Err(bad("gamma observations must be positive"))
            }
            _ => Ok(data),
        }
    }

    /// Checks that every non-degenerate spec has valid data.
    pub fn validate(&self, specs: &[ModelSpec]) -> Result<()> {
        for spec in specs.iter().filter(|s| !s.is_degenerate()) {
            self.model_data(spec)?;
        }
        Ok(())
    }
}

/// Moment sub-vector of one input model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBlock {
    pub model_id: String,
    pub values: Vec<f64>,
}

/// Stacked moment blocks, ordered as the specs that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub blocks: Vec<MomentBlock>,
}

impl MomentVector {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    pub fn block(&self, model_id: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|b| b.model_id == model_id)
            .map(|b| b.values.as_slice())
    }

    pub fn block_mut(&mut self, model_id: &str) -> Option<&mut Vec<f64>> {
        self.blocks
            .iter_mut()
            .find(|b| b.model_id == model_id)
            .map(|b| &mut b.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub spec_index: usize,
    pub model_id: String,
    pub family: Family,
    pub offset: usize,
    pub len: usize,
}

/// Coordinate map between model blocks and flat moment vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentLayout {
    entries: Vec<LayoutEntry>,
    dim: usize,
    models: usize,
}

impl MomentLayout {
    pub fn from_specs(specs: &[ModelSpec]) -> Self {
        let mut offset = 0;
        let mut entries = Vec::new();
        for (i, s) in specs.iter().enumerate() {
            let len = s.family.moment_count();
            if len == 0 {
                continue;
            }
            entries.push(LayoutEntry {
                spec_index: i,
                model_id: s.model_id.clone(),
                family: s.family.clone(),
                offset,
                len,
            });
            offset += len;
        }
        Self {
            entries,
            dim: offset,
            models: specs.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of declared models, degenerate ones included.
    pub fn model_count(&self) -> usize {
        self.models
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    /// Coordinates of the spec at `spec_index` (empty for degenerate models).
    pub fn range_of(&self, spec_index: usize) -> std::ops::Range<usize> {
        self.entries
            .iter()
            .find(|e| e.spec_index == spec_index)
            .map_or(0..0, |e| e.offset..e.offset + e.len)
    }

    pub fn unflatten(&self, flat: &[f64]) -> Result<MomentVector> {
        if flat.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: flat.len(),
            });
        }
        Ok(MomentVector {
            blocks: self
                .entries
                .iter()
                .map(|e| MomentBlock {
                    model_id: e.model_id.clone(),
                    values: flat[e.offset..e.offset + e.len].to_vec(),
                })
                .collect(),
        })
    }
}

fn mean_std(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    if data.len() < 2 {
        return (mean, 0.0);
    }
    let ss = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Moment block of one model from raw observations.
pub fn estimate_block(data: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyModelData(spec.model_id.clone()));
    }
    let (mean, std) = mean_std(data);
    let block = match spec.family {
        Family::Normal | Family::Uniform | Family::Gamma => vec![mean, std],
        Family::NormalZeroMean => vec![std],
        Family::Bernoulli => vec![mean],
        Family::Degenerate { .. } => vec![],
    };
    if spec.family.has_std() && !(std > 0.0) {
        return Err(Error::DegenerateSample(spec.model_id.clone()));
    }
    Ok(block)
}

/// Point estimate `x^(0)` of the moment vector from the real-world data.
pub fn estimate_moments(dataset: &InputDataset, specs: &[ModelSpec]) -> Result<MomentVector> {
    let mut blocks = Vec::new();
    for spec in specs.iter().filter(|s| !s.is_degenerate()) {
        let data = dataset.model_data(spec)?;
        blocks.push(MomentBlock {
            model_id: spec.model_id.clone(),
            values: estimate_block(data, spec)?,
        });
    }
    Ok(MomentVector { blocks })
}

/// What to do when a resample has zero standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    Redraw { max_attempts: usize },
    Error,
}

impl Default for DegeneratePolicy {
    fn default() -> Self {
        DegeneratePolicy::Redraw { max_attempts: 100 }
    }
}

/// Fills `out` with draws from `data`, uniformly with replacement.
pub fn resample_into<R: Rng + ?Sized>(data: &[f64], out: &mut [f64], rng: &mut R) {
    for slot in out.iter_mut() {
        *slot = data[rng.random_range(0..data.len())];
    }
}

/// One with-replacement resample of `data`, summarized as a moment block.
/// Returns the block and the number of redraws that were needed.
pub fn bootstrap_block<R: Rng + ?Sized>(
    data: &[f64],
    spec: &ModelSpec,
    policy: DegeneratePolicy,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    let m = data.len();
    if m == 0 {
        return Err(Error::EmptyModelData(spec.model_id.clone()));
    }
    let mut buf = vec![0.0; m];
    let mut redraws = 0;
    loop {
        resample_into(data, &mut buf, rng);
        match estimate_block(&buf, spec) {
            Ok(block) => return Ok((block, redraws)),
            Err(Error::DegenerateSample(id)) => match policy {
                DegeneratePolicy::Error => return Err(Error::DegenerateSample(id)),
                DegeneratePolicy::Redraw { max_attempts } => {
                    if redraws >= max_attempts {
                        return Err(Error::ExhaustedRedraws {
                            model: id,
                            attempts: max_attempts,
                        });
                    }
                    redraws += 1;
                }
            },
            Err(e) => return Err(e),
        }
    }
}

/// Random stream for resample `b` of the model at `spec_index`.
///
/// Keyed by `(seed, spec_index, b)` so the same model's `b`-th resample is
/// identical wherever it is drawn (bootstrap loop, design, Shapley costs).
pub fn resample_stream(seed: u64, spec_index: usize, b: usize) -> Stream {
    rng::stream(seed, &[rng::phase::BOOTSTRAP, spec_index as u64, b as u64])
}

/// Bootstrap replicate `b`: every non-degenerate model resampled independently.
pub fn bootstrap_replicate(
    dataset: &InputDataset,
    specs: &[ModelSpec],
    seed: u64,
    b: usize,
    policy: DegeneratePolicy,
) -> Result<(MomentVector, usize)> {
    let mut blocks = Vec::new();
    let mut redraws = 0;
    for (i, spec) in specs.iter().enumerate() {
        if spec.is_degenerate() {
            continue;
        }
        let data = dataset.model_data(spec)?;
        let (values, r) = bootstrap_block(data, spec, policy, &mut resample_stream(seed, i, b))?;
        redraws += r;
        blocks.push(MomentBlock {
            model_id: spec.model_id.clone(),
            values,
        });
    }
    Ok((MomentVector { blocks }, redraws))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSet {
    pub moments: Vec<MomentVector>,
    pub redraws: usize,
}

/// `count` bootstrap moment vectors; replicate `b` uses the substream of [`resample_stream`].
pub fn bootstrap_moments(
    dataset: &InputDataset,
    specs: &[ModelSpec],
    count: usize,
    seed: u64,
    policy: DegeneratePolicy,
) -> Result<BootstrapSet> {
    bootstrap_range(dataset, specs, 0..count, seed, policy)
}

/// Bootstrap replicates with indices in `range`.
pub fn bootstrap_range(
    dataset: &InputDataset,
    specs: &[ModelSpec],
    range: std::ops::Range<usize>,
    seed: u64,
    policy: DegeneratePolicy,
) -> Result<BootstrapSet> {
    if range.is_empty() {
        return Err(Error::InvalidSize("bootstrap count must be at least 1".into()));
    }
    dataset.validate(specs)?;
    let results: Vec<Result<(MomentVector, usize)>> =
        crate::par_map(range.collect(), |b| bootstrap_replicate(dataset, specs, seed, b, policy));
    let mut moments = Vec::with_capacity(results.len());
    let mut redraws = 0;
    for r in results {
        let (m, k) = r?;
        moments.push(m);
        redraws += k;
    }
    if redraws > 0 {
        log::info!("bootstrap: {redraws} degenerate resamples redrawn");
    }
    Ok(BootstrapSet { moments, redraws })
}

/// Natural parameters of an input distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Natural {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
    Gamma { shape: f64, scale: f64 },
    PointMass(f64),
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Inverts a moment block to the family's natural parameters.
pub fn moments_to_natural(block: &[f64], spec: &ModelSpec) -> Result<Natural> {
    let invalid = |reason: String| Error::InvalidMoments {
        model: spec.model_id.clone(),
        reason,
    };
    if block.len() != spec.family.moment_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.family.moment_count(),
            got: block.len(),
        });
    }
    if block.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite moment".into()));
    }
    let check_std = |s: f64| {
        if s < 0.0 {
            Err(invalid(format!("negative standard deviation {s}")))
        } else {
            Ok(s)
        }
    };
    Ok(match spec.family {
        Family::Normal => Natural::Normal {
            mean: block[0],
            std: check_std(block[1])?,
        },
        Family::NormalZeroMean => Natural::Normal {
            mean: 0.0,
            std: check_std(block[0])?,
        },
        Family::Uniform => {
            let half = SQRT3 * check_std(block[1])?;
            Natural::Uniform {
                lo: block[0] - half,
                hi: block[0] + half,
            }
        }
        Family::Bernoulli => {
            let p = block[0];
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("probability {p} outside [0, 1]")));
            }
            Natural::Bernoulli { p }
        }
        Family::Gamma => {
            let (m, s) = (block[0], check_std(block[1])?);
            if m <= 0.0 {
                return Err(invalid(format!("gamma mean {m} is not positive")));
            }
            if s == 0.0 {
                Natural::PointMass(m)
            } else {
                Natural::Gamma {
                    shape: (m / s).powi(2),
                    scale: s * s / m,
                }
            }
        }
        Family::Degenerate { value } => Natural::PointMass(value),
    })
}

/// Analytic moment block of `natural` for the given family layout.
pub fn natural_to_moments(natural: &Natural, family: &Family) -> Vec<f64> {
    let (mean, std) = match *natural {
        Natural::Normal { mean, std } => (mean, std),
        Natural::Uniform { lo, hi } => ((lo + hi) / 2.0, (hi - lo) / (2.0 * SQRT3)),
        Natural::Bernoulli { p } => (p, (p * (1.0 - p)).sqrt()),
        Natural::Gamma { shape, scale } => (shape * scale, shape.sqrt() * scale),
        Natural::PointMass(v) => (v, 0.0),
    };
    match family {
        Family::Normal | Family::Uniform | Family::Gamma => vec![mean, std],
        Family::NormalZeroMean => vec![std],
        Family::Bernoulli => vec![mean],
        Family::Degenerate { .. } => vec![],
    }
}

/// Clamps a block onto the family's domain (standard deviations ≥ 0, probabilities in [0, 1]).
///
/// Design points come from an unconstrained ellipsoid and may leave the domain.
pub fn project_to_domain(block: &[f64], family: &Family) -> Vec<f64> {
    let mut out = block.to_vec();
    match family {
        Family::Normal | Family::Uniform | Family::Gamma => {
            if let Some(s) = out.get_mut(1) {
                *s = s.max(0.0);
            }
            if matches!(family, Family::Gamma) {
                if let Some(m) = out.get_mut(0) {
                    *m = m.max(f64::MIN_POSITIVE);
                }
            }
        }
        Family::NormalZeroMean => {
            if let Some(s) = out.get_mut(0) {
                *s = s.max(0.0);
            }
        }
        Family::Bernoulli => {
            if let Some(p) = out.get_mut(0) {
                *p = p.clamp(0.0, 1.0);
            }
        }
        Family::Degenerate { .. } => {}
    }
    out
}

/// Prebuilt sampler for a [`Natural`] distribution.
#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    Normal(Normal<f64>),
    Uniform { lo: f64, width: f64 },
    Bernoulli(f64),
    Gamma(Gamma<f64>),
    Constant(f64),
}

impl Sampler {
    pub fn new(natural: &Natural) -> Result<Self> {
        let bad = |reason: String| Error::InvalidMoments {
            model: String::new(),
            reason,
        };
        Ok(match *natural {
            Natural::Normal { mean, std } => {
                if std == 0.0 {
                    Sampler::Constant(mean)
                } else {
                    Sampler::Normal(Normal::new(mean, std).map_err(|e| bad(e.to_string()))?)
                }
            }
            Natural::Uniform { lo, hi } => Sampler::Uniform { lo, width: hi - lo },
            Natural::Bernoulli { p } => Sampler::Bernoulli(p),
            Natural::Gamma { shape, scale } => {
                Sampler::Gamma(Gamma::new(shape, scale).map_err(|e| bad(e.to_string()))?)
            }
            Natural::PointMass(v) => Sampler::Constant(v),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Uniform { lo, width } => lo + width * rng.random::<f64>(),
            Sampler::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::Constant(v) => *v,
        }
    }
}

/// Sampler for the block of `spec` inside `x`, after projecting onto the family domain.
pub fn block_sampler(x: &MomentVector, spec: &ModelSpec) -> Result<Sampler> {
    let natural = match spec.family {
        Family::Degenerate { value } => Natural::PointMass(value),
        _ => {
            let block = x.block(&spec.model_id).ok_or_else(|| Error::InvalidMoments {
                model: spec.model_id.clone(),
                reason: "block missing from moment vector".into(),
            })?;
            moments_to_natural(&project_to_domain(block, &spec.family), spec)?
        }
    };
    Sampler::new(&natural).map_err(|e| match e {
        Error::InvalidMoments { reason, .. } => Error::InvalidMoments {
            model: spec.model_id.clone(),
            reason,
        },
        other => other,
    })
}

/// Synthetic "real-world" data: `counts[i]` draws from each spec's distribution at `truth`.
pub fn synthesize_dataset(
    specs: &[ModelSpec],
    truth: &MomentVector,
    counts: &[usize],
    seed: u64,
) -> Result<InputDataset> {
    if counts.len() != specs.len() {
        return Err(Error::DimensionMismatch {
            expected: specs.len(),
            got: counts.len(),
        });
    }
    let mut ds = InputDataset::new();
    for (i, spec) in specs.iter().enumerate() {
        if spec.is_degenerate() {
            continue;
        }
        let sampler = block_sampler(truth, spec)?;
        let mut rng = rng::stream(seed, &[rng::phase::DATA, i as u64]);
        let values = (0..counts[i]).map(|_| sampler.sample(&mut rng)).collect();
        ds.insert(spec.model_id.clone(), values);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family) -> ModelSpec {
        ModelSpec::new("m", family)
    }

    #[test]
    fn normal_block_uses_n_minus_one() {
        let b = estimate_block(&[1.0, 2.0, 3.0], &spec(Family::Normal)).unwrap();
        assert_eq!(b, vec![2.0, 1.0]);
    }

    #[test]
    fn bernoulli_proportion() {
        let b = estimate_block(&[1.0, 1.0, 0.0, 1.0], &spec(Family::Bernoulli)).unwrap();
        assert_eq!(b, vec![0.75]);
    }

    #[test]
    fn missing_model_is_reported() {
        let mut ds = InputDataset::new();
        ds.insert("a", vec![1.0, 2.0]);
        let specs = vec![
            ModelSpec::new("a", Family::Normal),
            ModelSpec::new("b", Family::Normal),
        ];
        assert!(matches!(
            estimate_moments(&ds, &specs),
            Err(Error::EmptyModelData(id)) if id == "b"
        ));
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert!(matches!(
            estimate_block(&[2.0, 2.0], &spec(Family::Gamma)),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn uniform_inversion() {
        let n = moments_to_natural(&[0.45, 0.028868], &spec(Family::Uniform)).unwrap();
        let Natural::Uniform { lo, hi } = n else { panic!() };
        assert!((lo - 0.40).abs() < 1e-5 && (hi - 0.50).abs() < 1e-5);
    }

    #[test]
    fn gamma_inversion_matches_exponential() {
        let n = moments_to_natural(&[0.25, 0.25], &spec(Family::Gamma)).unwrap();
        assert_eq!(n, Natural::Gamma { shape: 1.0, scale: 0.25 });
    }

    #[test]
    fn normal_inversion_is_identity() {
        let n = moments_to_natural(&[2.0, 1.0], &spec(Family::Normal)).unwrap();
        assert_eq!(n, Natural::Normal { mean: 2.0, std: 1.0 });
    }

    #[test]
    fn gamma_nonpositive_mean_rejected() {
        assert!(matches!(
            moments_to_natural(&[-0.1, 0.2], &spec(Family::Gamma)),
            Err(Error::InvalidMoments { .. })
        ));
    }

    #[test]
    fn bad_bernoulli_data_rejected() {
        let mut ds = InputDataset::new();
        ds.insert("m", vec![0.0, 0.5]);
        assert!(matches!(
            ds.validate(&[spec(Family::Bernoulli)]),
            Err(Error::InvalidData { .. })
        ));
    }

    #[test]
    fn layout_skips_degenerate_models() {
        let specs = vec![
            ModelSpec::new("a", Family::Normal),
            ModelSpec::new("k", Family::Degenerate { value: 3.0 }),
            ModelSpec::new("p", Family::Bernoulli),
        ];
        let layout = MomentLayout::from_specs(&specs);
        assert_eq!(layout.dim(), 3);
        assert_eq!(layout.model_count(), 3);
        assert_eq!(layout.range_of(1), 0..0);
        assert_eq!(layout.range_of(2), 2..3);
        let x = layout.unflatten(&[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(x.block("p"), Some(&[0.5][..]));
        assert_eq!(x.flat(), vec![1.0, 2.0, 0.5]);
    }
}
