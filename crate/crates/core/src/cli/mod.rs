//! Command-line front end: config-driven design, fitting, UQ, attribution and studies.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
//! numerical or domain failures. Failures print one line
//! `error kind=<Kind> message=<text>` on stderr.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use config::{StudyConfig, StudySettings};

use crate::design::{make_design, ExperimentDesign};
use crate::error::{Error, Result};
use crate::inputs::{self, MomentLayout};
use crate::kriging::{self, SkModel};
use crate::numkit;
use crate::rng;
use crate::shapley::{self, ShapleyResult};
use crate::simulators::{self, Simulator};
use crate::uq::{self, UqRun};

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "MABS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mabs", version, about = "Metamodel-assisted bootstrap for stochastic simulation")]
pub struct Cli {
    /// Study configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of what is printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the experiment design and write design.json.
    Design,
    /// Simulate at the design points and fit the metamodel (skmodel.json).
    Fit {
        /// Existing design.json; built from the config when omitted.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Full UQ pipeline: uq_result.json, design.json, skmodel.json, samples.csv.
    Uq,
    /// Shapley attribution: shapley.json and shapley.csv.
    Shapley {
        /// Fitted model; defaults to skmodel.json in the output directory, else fitted inline.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Mean response at the true input parameters.
    Oracle {
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Macro-replicated coverage study: study.csv and study_summary.json.
    Study {
        #[arg(long)]
        macro_reps: Option<usize>,
    },
    /// Write a synthetic dataset drawn from the simulator's true input models.
    Generate {
        /// Observations per input model.
        #[arg(long)]
        m: usize,
        /// Destination CSV; defaults to the config's dataset path.
        #[arg(long)]
        to: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={message}", e.kind());
            e.exit_code()
        }
    }
}

fn load(cli: &Cli) -> Result<StudyConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = StudyConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Design => {
            let d = cmd_design(&cfg)?;
            write_json(&cfg.out, "design.json", &d)?;
            print_line(cli.format, &[("points", d.points.len().to_string()), ("reps", d.reps.to_string())])
        }
        Command::Fit { design } => {
            let design = match design {
                Some(p) => read_json(p)?,
                None => cmd_design(&cfg)?,
            };
            let model = cmd_fit(&cfg, &design)?;
            write_json(&cfg.out, "skmodel.json", &model)?;
            print_line(
                cli.format,
                &[
                    ("beta0", model.beta0().to_string()),
                    ("tau2", model.tau2().to_string()),
                    ("log_likelihood", model.log_likelihood().to_string()),
                ],
            )
        }
        Command::Uq => {
            let run = cmd_uq(&cfg)?;
            let r = run.result.report();
            print_line(
                cli.format,
                &[
                    ("ci0_lo", r.ci0_lo.to_string()),
                    ("ci0_hi", r.ci0_hi.to_string()),
                    ("ciplus_lo", r.ciplus_lo.to_string()),
                    ("ciplus_hi", r.ciplus_hi.to_string()),
                    ("ratio", r.ratio.to_string()),
                ],
            )
        }
        Command::Shapley { model } => {
            let r = cmd_shapley(&cfg, model.as_deref())?;
            match cli.format {
                Format::Json => println!("{}", serde_json::to_string(&r)?),
                Format::Csv => r.write_csv(std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Oracle { reps } => {
            let o = cmd_oracle(&cfg, *reps)?;
            match cli.format {
                Format::Json => println!("{}", serde_json::to_string(&o)?),
                Format::Csv => {
                    println!("simulator,mean,std_error,reps,exact");
                    println!("{},{},{},{},{}", o.simulator, o.mean, o.std_error, o.reps, o.exact);
                }
            }
            Ok(())
        }
        Command::Study { macro_reps } => {
            let summary = cmd_study(&cfg, macro_reps.unwrap_or(cfg.study.macro_reps))?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(())
        }
        Command::Generate { m, to } => {
            let sim = cfg.simulator()?;
            let specs = cfg.model_specs(sim.as_ref())?;
            let ds = synthesize(sim.as_ref(), &specs, *m, cfg.seed)?;
            let path = to
                .clone()
                .or_else(|| cfg.dataset.clone())
                .ok_or_else(|| Error::Config("no destination: pass --to or set dataset".into()))?;
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            inputs::write_dataset_csv(&ds, std::fs::File::create(&path)?)?;
            Ok(())
        }
    }
}

fn print_line(format: Format, fields: &[(&str, String)]) -> Result<()> {
    match format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = fields
                .iter()
                .map(|(k, v)| {
                    let value = v
                        .parse::<f64>()
                        .ok()
                        .and_then(serde_json::Number::from_f64)
                        .map_or_else(|| serde_json::Value::String(v.clone()), serde_json::Value::Number);
                    (k.to_string(), value)
                })
                .collect();
            println!("{}", serde_json::Value::Object(map));
        }
        Format::Csv => {
            println!("{}", fields.iter().map(|f| f.0).collect::<Vec<_>>().join(","));
            println!("{}", fields.iter().map(|f| f.1.as_str()).collect::<Vec<_>>().join(","));
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(name))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(config::open(path)?))?)
}

fn synthesize(
    sim: &dyn Simulator,
    specs: &[inputs::ModelSpec],
    m: usize,
    seed: u64,
) -> Result<inputs::InputDataset> {
    let truth = sim
        .true_moments()
        .ok_or_else(|| Error::Config(format!("simulator `{}` has no true parameters", sim.name())))?;
    inputs::synthesize_dataset(specs, &truth, &vec![m; specs.len()], seed)
}

pub fn cmd_design(cfg: &StudyConfig) -> Result<ExperimentDesign> {
    let sim = cfg.simulator()?;
    let specs = cfg.model_specs(sim.as_ref())?;
    uq::check_specs(sim.as_ref(), &specs)?;
    let ds = cfg.load_dataset()?;
    make_design(&ds, &specs, &cfg.design, cfg.seed, cfg.degenerate_policy)
}

pub fn cmd_fit(cfg: &StudyConfig, design: &ExperimentDesign) -> Result<SkModel> {
    let sim = cfg.simulator()?;
    let specs = cfg.model_specs(sim.as_ref())?;
    uq::check_specs(sim.as_ref(), &specs)?;
    let layout = MomentLayout::from_specs(&specs);
    let summary = uq::simulate_design(sim.as_ref(), &layout, &design.points, design.reps, cfg.seed)?;
    kriging::fit(summary, &cfg.fit_options())
}

/// Runs the UQ pipeline and writes its four output files.
pub fn cmd_uq(cfg: &StudyConfig) -> Result<UqRun> {
    let sim = cfg.simulator()?;
    let specs = cfg.model_specs(sim.as_ref())?;
    let ds = cfg.load_dataset()?;
    let run = uq::run_uq(
        &ds,
        &specs,
        sim.as_ref(),
        &cfg.design,
        &cfg.fit_options(),
        cfg.uq,
        cfg.degenerate_policy,
    )?;
    write_json(&cfg.out, "uq_result.json", &run.result.report())?;
    write_json(&cfg.out, "design.json", &run.design)?;
    write_json(&cfg.out, "skmodel.json", &run.model)?;
    std::fs::create_dir_all(&cfg.out)?;
    run.result
        .write_samples_csv(std::fs::File::create(cfg.out.join("samples.csv"))?)?;
    Ok(run)
}

pub fn cmd_shapley(cfg: &StudyConfig, model: Option<&Path>) -> Result<ShapleyResult> {
    let sim = cfg.simulator()?;
    let specs = cfg.model_specs(sim.as_ref())?;
    if matches!(cfg.sa.mode, shapley::ShapleyMode::Exact) && specs.len() > shapley::MAX_EXACT_MODELS {
        return Err(Error::TooManyModels {
            got: specs.len(),
            max: shapley::MAX_EXACT_MODELS,
        });
    }
    let ds = cfg.load_dataset()?;
    let default_path = cfg.out.join("skmodel.json");
    let model: SkModel = match model {
        Some(p) => read_json(p)?,
        None if default_path.exists() => read_json(&default_path)?,
        None => {
            let design = cmd_design(cfg)?;
            cmd_fit(cfg, &design)?
        }
    };
    let r = shapley::run_sa(&model, &ds, &specs, &cfg.sa, cfg.degenerate_policy)?;
    write_json(&cfg.out, "shapley.json", &r)?;
    std::fs::create_dir_all(&cfg.out)?;
    r.write_csv(std::fs::File::create(cfg.out.join("shapley.csv"))?)?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub simulator: String,
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
    /// True when the value is analytic rather than Monte Carlo.
    pub exact: bool,
}

pub fn cmd_oracle(cfg: &StudyConfig, reps: Option<usize>) -> Result<OracleReport> {
    let sim = cfg.simulator()?;
    oracle(sim.as_ref(), reps.or(cfg.oracle_reps), cfg.seed)
}

/// Analytic mean when the simulator has one and no replication count is requested,
/// otherwise a Monte-Carlo estimate at the true moments.
pub fn oracle(sim: &dyn Simulator, reps: Option<usize>, seed: u64) -> Result<OracleReport> {
    let truth = sim
        .true_moments()
        .ok_or_else(|| Error::Config(format!("simulator `{}` has no true parameters", sim.name())))?;
    if reps.is_none() {
        if let Some(v) = sim.analytic_mean(&truth) {
            return Ok(OracleReport {
                simulator: sim.name().into(),
                mean: v?,
                std_error: 0.0,
                reps: 0,
                exact: true,
            });
        }
    }
    let est = simulators::monte_carlo_mean(sim, &truth, reps.unwrap_or(1_000_000), seed)?;
    Ok(OracleReport {
        simulator: sim.name().into(),
        mean: est.mean,
        std_error: est.std_error,
        reps: est.reps,
        exact: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub rep: usize,
    pub seed: u64,
    pub covered_ci0: bool,
    pub covered_ciplus: bool,
    pub width_ci0: f64,
    pub width_ciplus: f64,
    pub ratio: f64,
    #[serde(rename = "sigma2_I")]
    pub sigma2_i: f64,
    #[serde(rename = "sigma2_T")]
    pub sigma2_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub macro_reps: usize,
    pub m: usize,
    pub truth: f64,
    pub coverage_ci0: f64,
    pub coverage_ciplus: f64,
    pub width_ci0_mean: f64,
    pub width_ci0_sd: f64,
    pub width_ciplus_mean: f64,
    pub width_ciplus_sd: f64,
    pub ratio_mean: f64,
    pub ratio_sd: f64,
    pub note: Option<String>,
}

/// Macro-replication `rep`: fresh data at the true parameters, then the UQ pipeline.
pub fn study_rep(
    cfg: &StudyConfig,
    sim: &dyn Simulator,
    specs: &[inputs::ModelSpec],
    truth: f64,
    rep: usize,
) -> Result<StudyRow> {
    let seed = rng::derive(cfg.seed, &[rng::phase::MACRO, rep as u64]);
    let ds = synthesize(sim, specs, cfg.study.m, seed)?;
    let run = uq::run_uq(
        &ds,
        specs,
        sim,
        &cfg.design,
        &cfg.fit_options(),
        uq::UqConfig { seed, ..cfg.uq },
        cfg.degenerate_policy,
    )?;
    let r = &run.result;
    Ok(StudyRow {
        rep,
        seed,
        covered_ci0: r.ci0.0 <= truth && truth <= r.ci0.1,
        covered_ciplus: r.ci_plus.0 <= truth && truth <= r.ci_plus.1,
        width_ci0: r.ci0.1 - r.ci0.0,
        width_ciplus: r.ci_plus.1 - r.ci_plus.0,
        ratio: r.ratio,
        sigma2_i: r.sigma2_i,
        sigma2_t: r.sigma2_t,
    })
}

pub fn summarize_study(rows: &[StudyRow], m: usize, truth: f64, note: Option<String>) -> StudySummary {
    let frac = |f: &dyn Fn(&StudyRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64;
    let col = |f: &dyn Fn(&StudyRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let (w0, wp, ra) = (col(&|r| r.width_ci0), col(&|r| r.width_ciplus), col(&|r| r.ratio));
    StudySummary {
        macro_reps: rows.len(),
        m,
        truth,
        coverage_ci0: frac(&|r| r.covered_ci0),
        coverage_ciplus: frac(&|r| r.covered_ciplus),
        width_ci0_mean: numkit::mean(&w0),
        width_ci0_sd: numkit::sample_variance(&w0).sqrt(),
        width_ciplus_mean: numkit::mean(&wp),
        width_ciplus_sd: numkit::sample_variance(&wp).sqrt(),
        ratio_mean: numkit::mean(&ra),
        ratio_sd: numkit::sample_variance(&ra).sqrt(),
        note,
    }
}

pub fn cmd_study(cfg: &StudyConfig, macro_reps: usize) -> Result<StudySummary> {
    if macro_reps == 0 {
        return Err(Error::Config("macro_reps must be at least 1".into()));
    }
    let sim = cfg.simulator()?;
    let specs = cfg.model_specs(sim.as_ref())?;
    uq::check_specs(sim.as_ref(), &specs)?;
    let truth = match cfg.study.truth {
        Some(t) => t,
        None => match sim.true_moments().and_then(|t| sim.analytic_mean(&t)) {
            Some(v) => v?,
            None => {
                let seed = rng::derive(cfg.seed, &[rng::phase::MACRO, u64::MAX]);
                oracle(sim.as_ref(), Some(cfg.study.oracle_reps), seed)?.mean
            }
        },
    };
    let rows = crate::par_map((0..macro_reps).collect(), |rep| study_rep(cfg, sim.as_ref(), &specs, truth, rep));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut w = csv::Writer::from_path(cfg.out.join("study.csv")).map_err(|e| Error::Config(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    let summary = summarize_study(&rows, cfg.study.m, truth, cfg.note.clone());
    write_json(&cfg.out, "study_summary.json", &summary)?;
    Ok(summary)
}

/// Sizes the global worker pool from [`THREADS_ENV`] when set.
pub fn init_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
