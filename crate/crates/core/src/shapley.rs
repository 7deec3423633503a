//! Attribution of the input-model variance to individual models with Shapley values.
//!
//! The game value of a subset `J` of models is the total-effect cost
//! `ĉ(J)`: the variance of the metamodel mean when only the blocks in `J`
//! are bootstrapped and every other block stays at its point estimate.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inputs::{self, DegeneratePolicy, InputDataset, MomentLayout, ModelSpec};
use crate::kriging::SkModel;
use crate::numkit;
use crate::rng;

/// Largest model count accepted by exact enumeration.
pub const MAX_EXACT_MODELS: usize = 15;

/// Subset of models as a bitmask over spec indices.
pub type Subset = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub entries: BTreeMap<Subset, f64>,
    pub b_prime: usize,
    pub seed: u64,
}

impl CostTable {
    pub fn get(&self, subset: Subset) -> Result<f64> {
        self.entries.get(&subset).copied().ok_or(Error::MissingSubset(subset))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMode {
    Exact,
    Sampled { n_perm: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub model_ids: Vec<String>,
    pub s: Vec<f64>,
    /// `s_ℓ / Σ s` (fractions, not percentages).
    pub share: Vec<f64>,
    /// Permutation standard errors in sampled mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
    pub mode: ShapleyMode,
    #[serde(rename = "B_prime")]
    pub b_prime: usize,
    pub seed: u64,
    /// `ĉ(full set)`.
    pub full_cost: f64,
}

impl ShapleyResult {
    fn from_values(s: Vec<f64>, std_error: Option<Vec<f64>>, mode: ShapleyMode, full_cost: f64) -> Self {
        let total: f64 = s.iter().sum();
        let share = if total != 0.0 {
            s.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; s.len()]
        };
        let ids = (0..s.len()).map(|i| i.to_string()).collect();
        Self {
            model_ids: ids,
            s,
            share,
            std_error,
            mode,
            b_prime: 0,
            seed: 0,
            full_cost,
        }
    }

    /// Writes `model_id,s,share_percent` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model_id", "s", "share_percent"])
            .map_err(|e| Error::Config(e.to_string()))?;
        for ((id, s), share) in self.model_ids.iter().zip(&self.s).zip(&self.share) {
            w.write_record([id.clone(), s.to_string(), (100.0 * share).to_string()])
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How resampled blocks are shared between subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Draws {
    /// Resample `b` of model `ℓ` is the same in every subset (and matches the UQ loop).
    #[default]
    Common,
    /// Every subset gets its own resamples.
    Independent,
}

/// Everything `estimate_cost` needs besides the subset.
pub struct CostContext<'a> {
    pub model: &'a SkModel,
    pub dataset: &'a InputDataset,
    pub specs: &'a [ModelSpec],
    pub b_prime: usize,
    pub seed: u64,
    pub policy: DegeneratePolicy,
    pub draws: Draws,
    layout: MomentLayout,
    x0: Vec<f64>,
}

impl<'a> CostContext<'a> {
    pub fn new(
        model: &'a SkModel,
        dataset: &'a InputDataset,
        specs: &'a [ModelSpec],
        b_prime: usize,
        seed: u64,
        policy: DegeneratePolicy,
        draws: Draws,
    ) -> Result<Self> {
        if b_prime < 2 {
            return Err(Error::InvalidSize("B' must be at least 2".into()));
        }
        let layout = MomentLayout::from_specs(specs);
        if layout.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: layout.dim(),
            });
        }
        let x0 = inputs::estimate_moments(dataset, specs)?.flat();
        Ok(Self {
            model,
            dataset,
            specs,
            b_prime,
            seed,
            policy,
            draws,
            layout,
            x0,
        })
    }

    pub fn models(&self) -> usize {
        self.specs.len()
    }

    /// `ĉ(J)`: sample variance over `b` of `m_p(x⁰_{−J}, X̂_J^(b))`.
    pub fn estimate_cost(&self, subset: Subset) -> Result<f64> {
        let members: Vec<usize> = (0..self.models())
            .filter(|&l| subset >> l & 1 == 1 && !self.specs[l].is_degenerate())
            .collect();
        if members.is_empty() {
            return Ok(0.0);
        }
        let key: Subset = members.iter().map(|&l| 1 << l).sum();
        let data: Vec<&[f64]> = members
            .iter()
            .map(|&l| self.dataset.model_data(&self.specs[l]))
            .collect::<Result<_>>()?;
        let values = crate::par_map((0..self.b_prime).collect(), |b| -> Result<f64> {
            let mut x = self.x0.clone();
            for (&l, d) in members.iter().zip(&data) {
                let mut stream = match self.draws {
                    Draws::Common => inputs::resample_stream(self.seed, l, b),
                    Draws::Independent => {
                        rng::stream(self.seed, &[rng::phase::SHAPLEY, key as u64, l as u64, b as u64])
                    }
                };
                let (block, _) = inputs::bootstrap_block(d, &self.specs[l], self.policy, &mut stream)?;
                x[self.layout.range_of(l)].copy_from_slice(&block);
            }
            Ok(self.model.predict(&x)?.mean)
        });
        let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
        Ok(numkit::sample_variance(&values))
    }

    /// Costs for `subsets`, estimated once each.
    pub fn cost_table(&self, subsets: impl IntoIterator<Item = Subset>) -> Result<CostTable> {
        let unique: BTreeSet<Subset> = subsets.into_iter().collect();
        let mut entries = BTreeMap::new();
        for s in unique {
            entries.insert(s, self.estimate_cost(s)?);
        }
        Ok(CostTable {
            entries,
            b_prime: self.b_prime,
            seed: self.seed,
        })
    }
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for i in 1..=n {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

/// Exact Shapley values from a complete cost table over `l` players.
pub fn shapley_exact(costs: &CostTable, l: usize) -> Result<ShapleyResult> {
    if l > MAX_EXACT_MODELS {
        return Err(Error::TooManyModels {
            got: l,
            max: MAX_EXACT_MODELS,
        });
    }
    let fact = factorials(l);
    let full: Subset = if l == 0 { 0 } else { (1 << l) - 1 };
    let mut s = vec![0.0; l];
    for (player, value) in s.iter_mut().enumerate() {
        let bit = 1 << player;
        for subset in 0..=full {
            if subset & bit != 0 {
                continue;
            }
            let size = subset.count_ones() as usize;
            let weight = fact[l - size - 1] * fact[size] / fact[l];
            *value += weight * (costs.get(subset | bit)? - costs.get(subset)?);
        }
    }
    let mut r = ShapleyResult::from_values(s, None, ShapleyMode::Exact, costs.get(full)?);
    r.b_prime = costs.b_prime;
    r.seed = costs.seed;
    Ok(r)
}

fn all_permutations(l: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..l).collect(), &mut out);
    out
}

const ENUMERATE_UP_TO: usize = 8;

/// Permutation-sampled Shapley values; `cost` is evaluated once per distinct subset.
///
/// When `n_perm` covers all `l!` orderings (and `l` is small) every ordering is used once.
pub fn shapley_sampled<F>(cost: F, l: usize, n_perm: usize, seed: u64) -> Result<ShapleyResult>
where
    F: Fn(Subset) -> Result<f64>,
{
    if n_perm == 0 {
        return Err(Error::InvalidSize("need at least one permutation".into()));
    }
    if l > 31 {
        return Err(Error::TooManyModels { got: l, max: 31 });
    }
    let enumerate = l <= ENUMERATE_UP_TO && factorials(l)[l] <= n_perm as f64;
    let perms = if enumerate {
        all_permutations(l)
    } else {
        let mut r = rng::stream(seed, &[rng::phase::SHAPLEY]);
        (0..n_perm)
            .map(|_| {
                let mut p: Vec<usize> = (0..l).collect();
                p.shuffle(&mut r);
                p
            })
            .collect()
    };
    let mut memo: BTreeMap<Subset, f64> = BTreeMap::new();
    memo.insert(0, 0.0);
    let mut lookup = |s: Subset| -> Result<f64> {
        if let Some(&v) = memo.get(&s) {
            return Ok(v);
        }
        let v = cost(s)?;
        memo.insert(s, v);
        Ok(v)
    };
    let mut sums = vec![0.0; l];
    let mut sq = vec![0.0; l];
    for p in &perms {
        let mut pred: Subset = 0;
        let mut before = 0.0;
        for &player in p {
            let with = pred | (1 << player);
            let after = lookup(with)?;
            let delta = after - before;
            sums[player] += delta;
            sq[player] += delta * delta;
            pred = with;
            before = after;
        }
    }
    let n = perms.len() as f64;
    let s: Vec<f64> = sums.iter().map(|v| v / n).collect();
    let se = if enumerate || perms.len() < 2 {
        vec![0.0; l]
    } else {
        s.iter()
            .zip(&sq)
            .map(|(m, q)| ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect()
    };
    let full: Subset = if l == 0 { 0 } else { ((1u64 << l) - 1) as Subset };
    let full_cost = lookup(full)?;
    Ok(ShapleyResult::from_values(
        s,
        Some(se),
        ShapleyMode::Sampled { n_perm: perms.len() },
        full_cost,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaConfig {
    #[serde(rename = "B_prime")]
    pub b_prime: usize,
    pub mode: ShapleyMode,
    pub draws: Draws,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            b_prime: 2000,
            mode: ShapleyMode::Exact,
            draws: Draws::Common,
            seed: 0,
        }
    }
}

/// Shapley attribution of the input-model variance of `model` to each spec.
pub fn run_sa(
    model: &SkModel,
    dataset: &InputDataset,
    specs: &[ModelSpec],
    config: &SaConfig,
    policy: DegeneratePolicy,
) -> Result<ShapleyResult> {
    let l = specs.len();
    if l == 0 {
        return Err(Error::InvalidSize("no input models".into()));
    }
    let ctx = CostContext::new(model, dataset, specs, config.b_prime, config.seed, policy, config.draws)?;
    let mut result = match config.mode {
        ShapleyMode::Exact => {
            if l > MAX_EXACT_MODELS {
                return Err(Error::TooManyModels {
                    got: l,
                    max: MAX_EXACT_MODELS,
                });
            }
            let table = ctx.cost_table(0..(1u32 << l))?;
            shapley_exact(&table, l)?
        }
        ShapleyMode::Sampled { n_perm } => shapley_sampled(|s| ctx.estimate_cost(s), l, n_perm, config.seed)?,
    };
    result.model_ids = specs.iter().map(|s| s.model_id.clone()).collect();
    result.b_prime = config.b_prime;
    result.seed = config.seed;
    Ok(result)
}
