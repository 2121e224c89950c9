use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use hrdepth::analysis::{run_experiment, ExperimentConfig, ExperimentKind};
use hrdepth::depth::{
    empirical_depth, empirical_depth_subset, empirical_increment_depth, nasc_verdict, product_sides,
    sparre_andersen_exact, TailModel,
};
use hrdepth::io::{self, EnsembleSidecar};
use hrdepth::models;
use hrdepth::smoothing::{smooth_ensemble, tv_shift_check, DensityFamily};
use hrdepth::{GridFunction, IndexSubset, MarginalSpec, PathEnsemble64, ProcessKind, ProcessModel, SmoothingDensity};

use crate::{
    CheckCommand, DepthArgs, ExactArgs, ExperimentArgs, ExperimentName, Family, ModelArgs, ModelName, SimulateArgs,
    SmoothArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configs or input files.
    Config(String),
    /// Numeric failure or resource cap.
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<hrdepth::Error> for CliError {
    fn from(e: hrdepth::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("invalid JSON: {e}"))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

type CliResult = Result<(), CliError>;

/// Every command's output: its resolved config, the config hash and seed.
#[derive(Serialize)]
struct Envelope<'a, C, R> {
    command: &'a str,
    config: &'a C,
    config_hash: String,
    seed: Option<u64>,
    result: R,
}

fn emit<C: Serialize, R: Serialize>(
    command: &str,
    config: &C,
    seed: Option<u64>,
    result: R,
    out: Option<&Path>,
) -> CliResult {
    let envelope = Envelope { command, config, config_hash: io::config_hash(config)?, seed, result };
    let text = serde_json::to_string_pretty(&envelope)? + "\n";
    match out {
        Some(path) => Ok(io::write_atomic(path, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

impl From<Family> for DensityFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Gaussian => DensityFamily::Gaussian,
            Family::Laplace => DensityFamily::Laplace,
            Family::Cauchy => DensityFamily::Cauchy,
        }
    }
}

fn density(family: Family, scale: f64) -> Result<SmoothingDensity, CliError> {
    Ok(SmoothingDensity::new(family.into(), scale)?)
}

fn model_of(a: &ModelArgs) -> Result<ProcessModel, CliError> {
    let mut model = match (&a.model_json, a.model) {
        (Some(path), _) => serde_json::from_slice(&read_file(path)?)?,
        (None, Some(name)) => ProcessModel::new(match name {
            ModelName::Bm => ProcessKind::BrownianMotion,
            ModelName::Stable => ProcessKind::SymmetricStable { alpha: a.alpha },
            ModelName::Poisson => ProcessKind::Poisson { lambda: a.lambda },
            ModelName::CompoundPoisson => {
                ProcessKind::CompoundPoisson { lambda: a.lambda, jump: MarginalSpec::standard_normal() }
            }
            ModelName::Sheet => ProcessKind::BrownianSheet,
            ModelName::ReflectedBm => ProcessKind::ReflectedBm,
            ModelName::IntegratedPoisson => ProcessKind::IntegratedPoisson { lambda: a.lambda },
        }),
        (None, None) => return Err(CliError::Config("one of --model or --model-json is required".into())),
    };
    if let Some(family) = a.smooth {
        if model.smoothing.is_some() {
            return Err(CliError::Config("the model JSON already has smoothing".into()));
        }
        model.smoothing = Some(density(family, a.scale)?);
    }
    model.validate()?;
    Ok(model)
}

#[derive(Serialize)]
struct SimulateConfig {
    model: ProcessModel,
    n: usize,
    m: usize,
    seed: u64,
}

#[derive(Serialize)]
struct EnsembleOut<'a> {
    out: &'a Path,
    n: usize,
    grid_points: usize,
}

pub fn simulate(a: &SimulateArgs) -> CliResult {
    let config = SimulateConfig { model: model_of(&a.model)?, n: a.n, m: a.m, seed: a.seed };
    let ens: PathEnsemble64 = models::simulate(&config.model, config.n, config.m, config.seed)?;
    io::save_ensemble(&a.out, &ens, Some(io::config_hash(&config)?))?;
    emit("simulate", &config, Some(a.seed), EnsembleOut { out: &a.out, n: ens.n(), grid_points: ens.width() }, None)
}

/// Hash recorded in an ensemble's sidecar, if any.
fn ensemble_hash(paths: &Path) -> Result<Option<String>, CliError> {
    let side = io::sidecar_path(paths);
    if !side.exists() {
        return Ok(None);
    }
    let meta: EnsembleSidecar = serde_json::from_slice(&read_file(&side)?)?;
    Ok(meta.config_hash)
}

fn load(paths: &Path) -> Result<PathEnsemble64, CliError> {
    if !paths.exists() {
        return Err(CliError::Config(format!("no ensemble at {}", paths.display())));
    }
    Ok(io::load_ensemble(paths)?)
}

#[derive(Serialize)]
struct SmoothConfig<'a> {
    paths: &'a Path,
    ensemble_hash: Option<String>,
    density: SmoothingDensity,
    seed: u64,
}

pub fn smooth(a: &SmoothArgs) -> CliResult {
    let ens = load(&a.paths)?;
    let config = SmoothConfig {
        paths: &a.paths,
        ensemble_hash: ensemble_hash(&a.paths)?,
        density: density(a.family, a.scale)?,
        seed: a.seed,
    };
    let out = smooth_ensemble(&ens, config.density, a.seed)?;
    io::save_ensemble(&a.out, &out, Some(io::config_hash(&config)?))?;
    emit("smooth", &config, Some(a.seed), EnsembleOut { out: &a.out, n: out.n(), grid_points: out.width() }, None)
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum QuerySource<'a> {
    File(&'a Path),
    Level(f64),
}

#[derive(Serialize)]
struct DepthConfig<'a> {
    paths: &'a Path,
    ensemble_hash: Option<String>,
    query: QuerySource<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subset: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    increments: Option<Vec<(usize, usize)>>,
}

fn parse_interval(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("increment interval {s:?} is not of the form u:v"));
    let (u, v) = s.split_once(':').ok_or_else(bad)?;
    Ok((u.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
}

pub fn depth(a: &DepthArgs) -> CliResult {
    let ens = load(&a.paths)?;
    let (h, query) = match (&a.query, a.level) {
        (Some(path), _) => {
            let h: GridFunction<f64> = io::load_grid_function(path)?;
            if **h.grid() != **ens.grid() {
                return Err(CliError::Config("query and ensemble live on different grids".into()));
            }
            (GridFunction::new(ens.grid().clone(), h.values().to_vec())?, QuerySource::File(path))
        }
        (None, Some(c)) => (GridFunction::constant(ens.grid().clone(), c), QuerySource::Level(c)),
        (None, None) => return Err(CliError::Config("one of --query or --level is required".into())),
    };
    let increments: Option<Vec<(usize, usize)>> =
        a.increments.as_ref().map(|v| v.iter().map(|s| parse_interval(s)).collect()).transpose()?;
    let estimate = match (&a.subset, &increments) {
        (Some(idx), _) => empirical_depth_subset(&ens, &h, &IndexSubset::new(idx.clone(), ens.width())?)?,
        (None, Some(iv)) => empirical_increment_depth(&ens, &h, iv)?,
        (None, None) => empirical_depth(&ens, &h)?,
    };
    let config = DepthConfig {
        paths: &a.paths,
        ensemble_hash: ensemble_hash(&a.paths)?,
        query,
        subset: a.subset.as_deref(),
        increments,
    };
    emit("depth", &config, ens.seed(), &estimate, a.out.as_deref())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExactConfig {
    marginals: Vec<MarginalSpec>,
    a: Vec<f64>,
    #[serde(default)]
    tail: Option<TailModel>,
}

pub fn exact(a: &ExactArgs) -> CliResult {
    let config: ExactConfig = serde_json::from_slice(&read_file(&a.config)?)?;
    let sides = product_sides(&config.marginals, &config.a)?;
    let verdict = nasc_verdict(&config.marginals, &config.a, config.tail.unwrap_or(TailModel::None))?;
    let result = serde_json::json!({
        "upper": sides.upper,
        "lower": sides.lower,
        "depth": sides.depth(),
        "verdict": verdict,
    });
    emit("exact", &config, None, result, a.out.as_deref())
}

pub fn check(c: &CheckCommand) -> CliResult {
    match c {
        CheckCommand::Lemma1 { family, scale, delta } => {
            let d = density(*family, *scale)?;
            let rows = delta
                .iter()
                .map(|&delta| {
                    let s = tv_shift_check(d, delta)?;
                    Ok(serde_json::json!({
                        "delta": delta,
                        "lhs": s.lhs,
                        "rhs": s.rhs,
                        "w3_bound": s.w3_bound,
                        "holds": s.holds(),
                    }))
                })
                .collect::<Result<Vec<Value>, CliError>>()?;
            let config = serde_json::json!({ "check": "lemma1", "density": d, "delta": delta });
            emit("check", &config, None, rows, None)
        }
        CheckCommand::Sparre { m } => {
            if *m == 0 {
                return Err(CliError::Config("--m must be at least 1".into()));
            }
            let value = sparre_andersen_exact(*m);
            let config = serde_json::json!({ "check": "sparre", "m": m });
            emit("check", &config, None, serde_json::json!({ "value": value, "rounded": format!("{value:.6}") }), None)
        }
        CheckCommand::Gradl1 { family, scale } => {
            let d = density(*family, *scale)?;
            let result = serde_json::json!({
                "closed_form": d.grad_l1(),
                "quadrature": d.grad_l1_by_quadrature()?,
                "total_mass": d.total_mass_by_quadrature()?,
            });
            let config = serde_json::json!({ "check": "gradl1", "density": d });
            emit("check", &config, None, result, None)
        }
    }
}

fn kind_of(name: ExperimentName) -> ExperimentKind {
    match name {
        ExperimentName::ZeroTrend => ExperimentKind::ZeroTrend,
        ExperimentName::Consistency => ExperimentKind::Consistency,
        ExperimentName::Rate => ExperimentKind::Rate,
        ExperimentName::LimitLaw => ExperimentKind::LimitLaw,
        ExperimentName::Subset => ExperimentKind::Subset,
        ExperimentName::C2Gap => ExperimentKind::C2Gap,
    }
}

/// Parse a bare config for `name`, or a config tagged with `"experiment"`.
fn experiment_config(name: ExperimentName, value: Value) -> Result<ExperimentConfig, CliError> {
    if value.get("experiment").is_some() {
        let config: ExperimentConfig = serde_json::from_value(value)?;
        if config.kind() != kind_of(name) {
            return Err(CliError::Config(format!("config is tagged {:?}, not {name:?}", config.kind())));
        }
        return Ok(config);
    }
    Ok(match name {
        ExperimentName::ZeroTrend => ExperimentConfig::ZeroTrend(serde_json::from_value(value)?),
        ExperimentName::Consistency => ExperimentConfig::Consistency(serde_json::from_value(value)?),
        ExperimentName::Rate => ExperimentConfig::Rate(serde_json::from_value(value)?),
        ExperimentName::LimitLaw => ExperimentConfig::LimitLaw(serde_json::from_value(value)?),
        ExperimentName::Subset => ExperimentConfig::Subset(serde_json::from_value(value)?),
        ExperimentName::C2Gap => ExperimentConfig::C2Gap(serde_json::from_value(value)?),
    })
}

#[derive(Serialize)]
struct ReportPointer<'a> {
    kind: ExperimentKind,
    config_hash: &'a str,
    seed: u64,
    out: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    plot: Option<&'a PathBuf>,
    flags: &'a [hrdepth::analysis::Flag],
}

pub fn experiment(a: &ExperimentArgs) -> CliResult {
    let value: Value = serde_json::from_slice(&read_file(&a.config)?)?;
    let config = experiment_config(a.kind, value)?;
    let report = run_experiment(&config)?;
    if let Some(path) = &a.plot {
        crate::plot::report(&report, path)?;
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(out) => {
            io::write_atomic(out, text.as_bytes())?;
            let pointer = ReportPointer {
                kind: report.kind,
                config_hash: &report.config_hash,
                seed: report.seed,
                out,
                plot: a.plot.as_ref(),
                flags: &report.flags,
            };
            println!("{}", serde_json::to_string(&pointer)?);
        }
        None => print!("{text}"),
    }
    Ok(())
}
