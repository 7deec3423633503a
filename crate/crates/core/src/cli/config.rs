use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::DesignParams;
use crate::error::{Error, Result};
use crate::inputs::{self, DegeneratePolicy, InputDataset, ModelSpec};
use crate::kriging::FitOptions;
use crate::shapley::SaConfig;
use crate::simulators::{Simulator, SimulatorConfig};
use crate::uq::UqConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudySettings {
    pub macro_reps: usize,
    /// Real-world sample size per input model in each macro-replication.
    pub m: usize,
    /// Known true mean response; otherwise the simulator's analytic mean or a Monte-Carlo oracle.
    pub truth: Option<f64>,
    pub oracle_reps: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            macro_reps: 10,
            m: 20,
            truth: None,
            oracle_reps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Dataset CSV, relative to the config file.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Spec JSON, relative to the config file; defaults to the simulator's own models.
    #[serde(default)]
    pub specs: Option<PathBuf>,
    pub simulator: SimulatorConfig,
    #[serde(default)]
    pub design: DesignParams,
    #[serde(default)]
    pub fit: Option<FitOptions>,
    #[serde(default)]
    pub uq: UqConfig,
    #[serde(default)]
    pub sa: SaConfig,
    #[serde(default)]
    pub degenerate_policy: DegeneratePolicy,
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub oracle_reps: Option<usize>,
    #[serde(default)]
    pub study: StudySettings,
    /// Free-form note, e.g. the macro-replication reduction factor.
    #[serde(default)]
    pub note: Option<String>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl StudyConfig {
    /// Reads a config and resolves its paths against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: StudyConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        cfg.dataset = cfg.dataset.as_ref().map(resolve);
        cfg.specs = cfg.specs.as_ref().map(resolve);
        cfg.out = resolve(&cfg.out);
        if let Some(p) = cfg.specs.as_ref().filter(|p| !p.exists()) {
            return Err(Error::Config(format!("missing file {}", p.display())));
        }
        cfg.uq.seed = cfg.seed;
        cfg.sa.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.uq.seed = seed;
        self.sa.seed = seed;
    }

    pub fn simulator(&self) -> Result<Box<dyn Simulator>> {
        self.simulator.build()
    }

    pub fn model_specs(&self, sim: &dyn Simulator) -> Result<Vec<ModelSpec>> {
        match &self.specs {
            Some(p) => inputs::read_specs_json(open(p)?),
            None => Ok(sim.specs().to_vec()),
        }
    }

    pub fn load_dataset(&self) -> Result<InputDataset> {
        let p = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("config has no dataset path".into()))?;
        inputs::read_dataset_csv(open(p)?)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            seed: self.seed,
            ..self.fit.unwrap_or_default()
        }
    }
}

pub(crate) fn open(p: &Path) -> Result<std::fs::File> {
    std::fs::File::open(p).map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))
}
