//! JSON run configurations. Unknown keys are rejected and every value is
//! checked before any computation starts. Relative paths are resolved against
//! the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use gpsobol_core::bench::{FunctionKind, Profile, ProfilePlan, StudyConfig, TestFunction, GSOBOL_DEFAULT_A};
use gpsobol_core::effect::SimulationConfig;
use gpsobol_core::gp::{FitOptions, TrendKind};
use gpsobol_core::inputs::{InputDistribution, InputSpace};
use gpsobol_core::integrals::DEFAULT_TOLERANCE;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::schema(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::schema(format!("invalid config {}: {e}", path.display())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn space_from(dims: Vec<InputDistribution>) -> CliResult<InputSpace> {
    InputSpace::new(dims).map_err(|e| CliError::schema(e.to_string()))
}

fn check_simulation(sim: &SimulationConfig) -> CliResult<()> {
    sim.validate().map_err(|e| CliError::schema(e.to_string()))
}

fn check_probability(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CliError::schema(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn check_tolerance(v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::schema(format!("tolerance must be positive, got {v}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLhs {
    n: usize,
    #[serde(default)]
    inputs: Option<Vec<InputDistribution>>,
    #[serde(default)]
    function: Option<FunctionKind>,
}

/// Design generation, optionally evaluating an analytical test function.
pub struct LhsConfig {
    pub n: usize,
    pub space: InputSpace,
    pub function: Option<TestFunction>,
}

impl LhsConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw: RawLhs = read_json(path)?;
        if raw.n < 2 {
            return Err(CliError::schema(format!("n must be at least 2, got {}", raw.n)));
        }
        let function = raw.function.map(TestFunction::from_kind).transpose().map_err(|e| CliError::schema(e.to_string()))?;
        let space = match (raw.inputs, &function) {
            (Some(dims), f) => {
                let space = space_from(dims)?;
                if let Some(f) = f {
                    if f.dim() != space.dim() {
                        return Err(CliError::schema(format!(
                            "function has {} inputs but {} distributions were given",
                            f.dim(),
                            space.dim()
                        )));
                    }
                }
                space
            }
            (None, Some(f)) => f.space.clone(),
            (None, None) => return Err(CliError::schema("either `inputs` or `function` is required")),
        };
        Ok(Self { n: raw.n, space, function })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    inputs: Vec<InputDistribution>,
    design: PathBuf,
    #[serde(default)]
    trend: TrendKind,
    #[serde(default)]
    fit: FitOptions,
}

pub struct FitConfig {
    pub space: InputSpace,
    pub design: PathBuf,
    pub trend: TrendKind,
    pub fit: FitOptions,
}

impl FitConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw: RawFit = read_json(path)?;
        Ok(Self { space: space_from(raw.inputs)?, design: resolve(path, &raw.design), trend: raw.trend, fit: raw.fit })
    }
}

fn default_level() -> f64 {
    0.9
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSobol {
    model: PathBuf,
    inputs: Vec<InputDistribution>,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_level")]
    level: f64,
    #[serde(default)]
    simulation: SimulationConfig,
    #[serde(default = "yes")]
    convergence_check: bool,
    #[serde(default)]
    samples: bool,
}

pub struct SobolConfig {
    pub model: PathBuf,
    pub space: InputSpace,
    pub tolerance: f64,
    pub level: f64,
    pub simulation: SimulationConfig,
    pub convergence_check: bool,
    /// Also write every simulated realization.
    pub samples: bool,
}

impl SobolConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw: RawSobol = read_json(path)?;
        check_tolerance(raw.tolerance)?;
        check_probability("level", raw.level)?;
        check_simulation(&raw.simulation)?;
        Ok(Self {
            model: resolve(path, &raw.model),
            space: space_from(raw.inputs)?,
            tolerance: raw.tolerance,
            level: raw.level,
            simulation: raw.simulation,
            convergence_check: raw.convergence_check,
            samples: raw.samples,
        })
    }
}

fn default_a() -> Vec<f64> {
    GSOBOL_DEFAULT_A.to_vec()
}

fn default_profile() -> Profile {
    Profile::Ci
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default = "default_a")]
    pub gsobol_a: Vec<f64>,
    /// Replaces the sizes and replicate counts of `profile`.
    #[serde(default)]
    pub plan: Option<ProfilePlan>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { profile: Profile::Ci, study: StudyConfig::default(), gsobol_a: default_a(), plan: None }
    }
}

impl BenchConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let cfg = match path {
            Some(p) => read_json::<Self>(p)?,
            None => Self::default(),
        };
        check_probability("study.level", cfg.study.level)?;
        check_tolerance(cfg.study.tolerance)?;
        check_simulation(&cfg.study.simulation)?;
        if cfg.study.test_size < 2 {
            return Err(CliError::schema("study.test_size must be at least 2"));
        }
        if let Some(plan) = &cfg.plan {
            for (name, p) in [
                ("gsobol_convergence", &plan.gsobol_convergence),
                ("gsobol_coverage", &plan.gsobol_coverage),
                ("ishigami_coverage", &plan.ishigami_coverage),
            ] {
                if p.sizes.is_empty() || p.sizes.iter().any(|&n| n < 2) || p.replicates == 0 {
                    return Err(CliError::schema(format!("plan.{name}: sizes must be at least 2 and replicates positive")));
                }
            }
        }
        Ok(cfg)
    }

    pub fn plan(&self) -> ProfilePlan {
        self.plan.clone().unwrap_or_else(|| self.profile.plan())
    }
}
