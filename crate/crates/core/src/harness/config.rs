//! Scenario files.
//!
//! ```toml
//! grid = "case6ww.toml"        # relative to the scenario file
//! horizon = 40
//! window = 2
//! mu = 1.0
//! lambda = 0.0075
//! replications = 100
//! seed = 1
//! estimators = ["mhe", "ekf"]
//! output = "out"
//! prior = "flat"               # or "exact"
//!
//! [measurements]
//! line_flows = [1, 2, 3]       # active and reactive, from-end, by line number
//! injections = []              # active and reactive, by bus
//! voltage_magnitudes = [1, 2]  # squared magnitudes, by bus
//!
//! [transition]
//! diagonal = [1.0, 1.05]       # or per_step = [[...], ...], one row per step
//! ```
//!
//! Optional tables: `[noise]`, `[solver]`, `[extraction]`, `[ekf]`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{NoiseModel, TransitionMatrix};
use crate::error::{Error, Result};
use crate::grid::{GridModel, MeasurementDescriptor, MeasurementKind};
use crate::mhe::{Extraction, MheConfig};
use crate::sdr::SolverConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mhe,
    Ekf,
}

impl Estimator {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Mhe => "mhe",
            Self::Ekf => "ekf",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mhe" => Ok(Self::Mhe),
            "ekf" => Ok(Self::Ekf),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Where both estimators start: the flat profile or the true `v_0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    #[default]
    Flat,
    Exact,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    #[serde(default)]
    pub line_flows: Vec<usize>,
    #[serde(default)]
    pub injections: Vec<usize>,
    #[serde(default)]
    pub voltage_magnitudes: Vec<usize>,
}

impl MeasurementSpec {
    /// Active injections, reactive injections, active flows, reactive flows,
    /// then squared magnitudes.
    pub fn plan(&self, grid: &GridModel) -> Result<Vec<MeasurementDescriptor>> {
        let mut kinds = Vec::new();
        kinds.extend(
            self.injections
                .iter()
                .map(|&n| MeasurementKind::ActiveInjection(n)),
        );
        kinds.extend(
            self.injections
                .iter()
                .map(|&n| MeasurementKind::ReactiveInjection(n)),
        );
        let mut ends = Vec::with_capacity(self.line_flows.len());
        for &l in &self.line_flows {
            let line = l
                .checked_sub(1)
                .and_then(|i| grid.lines.get(i))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "line {l} does not exist (grid has {})",
                        grid.lines.len()
                    ))
                })?;
            ends.push((line.from_bus, line.to_bus));
        }
        kinds.extend(ends.iter().map(|&(m, n)| MeasurementKind::ActiveFlow(m, n)));
        kinds.extend(
            ends.iter()
                .map(|&(m, n)| MeasurementKind::ReactiveFlow(m, n)),
        );
        kinds.extend(
            self.voltage_magnitudes
                .iter()
                .map(|&n| MeasurementKind::SquaredVoltageMagnitude(n)),
        );
        let plan: Vec<_> = kinds.into_iter().map(MeasurementDescriptor::new).collect();
        for d in &plan {
            d.validate(grid)?;
        }
        if plan.is_empty() {
            return Err(Error::Config("the measurement plan is empty".into()));
        }
        Ok(plan)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub diagonal: Option<Vec<f64>>,
    pub per_step: Option<Vec<Vec<f64>>>,
}

impl TransitionSpec {
    pub fn constant(diagonal: Vec<f64>) -> Self {
        Self {
            diagonal: Some(diagonal),
            per_step: None,
        }
    }

    /// `F_0..F_{K-1}`.
    pub fn matrices(&self, buses: usize, horizon: usize) -> Result<Vec<TransitionMatrix>> {
        let rows: Vec<&Vec<f64>> = match (&self.diagonal, &self.per_step) {
            (Some(d), None) => vec![d; horizon],
            (None, Some(steps)) => {
                if steps.len() != horizon {
                    return Err(Error::Config(format!(
                        "per_step lists {} transitions, horizon needs {horizon}",
                        steps.len()
                    )));
                }
                steps.iter().collect()
            }
            _ => {
                return Err(Error::Config(
                    "transition needs exactly one of `diagonal` and `per_step`".into(),
                ))
            }
        };
        rows.into_iter()
            .map(|d| {
                if d.len() != buses {
                    return Err(Error::Config(format!(
                        "transition diagonal has {} entries for {buses} buses",
                        d.len()
                    )));
                }
                if d.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config("transition entries must be finite".into()));
                }
                Ok(TransitionMatrix::diagonal(d))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExtractionSpec {
    Eigen,
    Randomized { count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfSpec {
    /// Standard deviation of every component of the initial covariance.
    pub init_std: f64,
    /// Floor on the measurement variance, so noiseless runs keep `R` definite.
    pub min_measurement_variance: f64,
}

impl Default for EkfSpec {
    fn default() -> Self {
        Self {
            init_std: 0.1,
            min_measurement_variance: 1e-10,
        }
    }
}

/// A scenario file as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: PathBuf,
    pub measurements: MeasurementSpec,
    pub transition: TransitionSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    pub horizon: usize,
    pub window: usize,
    pub mu: f64,
    pub lambda: f64,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub output: PathBuf,
    #[serde(default)]
    pub prior: PriorKind,
    #[serde(default)]
    pub solver: SolverConfig,
    pub extraction: Option<ExtractionSpec>,
    #[serde(default)]
    pub ekf: EkfSpec,
}

/// A validated scenario with every path and matrix resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub grid: GridModel,
    pub plan: Vec<MeasurementDescriptor>,
    pub transitions: Vec<TransitionMatrix>,
    pub noise: NoiseModel,
    pub horizon: usize,
    pub mhe: MheConfig,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub output: PathBuf,
    pub prior: PriorKind,
    /// Randomized extraction sample count; seeds come from the replication.
    pub randomized_count: Option<usize>,
    pub ekf: EkfSpec,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolves the grid path and the output directory against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Scenario> {
        let grid = GridModel::load_case(&base.join(&self.grid))?;
        self.resolve_with_grid(grid, base)
    }

    pub fn resolve_with_grid(&self, grid: GridModel, base: &Path) -> Result<Scenario> {
        grid.validate()?;
        let plan = self.measurements.plan(&grid)?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.window > self.horizon {
            return Err(Error::Config(format!(
                "window {} exceeds the horizon {}",
                self.window, self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return Err(Error::Config("estimators are listed more than once".into()));
        }
        if !(self.ekf.init_std >= 0.0 && self.ekf.init_std.is_finite())
            || self.ekf.min_measurement_variance.is_nan()
            || self.ekf.min_measurement_variance <= 0.0
        {
            return Err(Error::Config(
                "ekf init_std must be nonnegative and the variance floor positive".into(),
            ));
        }
        self.noise.validate()?;
        let transitions = self.transition.matrices(grid.bus_count, self.horizon)?;
        let randomized_count = match self.extraction {
            None | Some(ExtractionSpec::Eigen) => None,
            Some(ExtractionSpec::Randomized { count }) => Some(count),
        };
        let mhe = MheConfig {
            window: self.window,
            mu: self.mu,
            lambda: self.lambda,
            solver: self.solver,
            extraction: match randomized_count {
                None => Extraction::Eigen,
                Some(count) => Extraction::Randomized {
                    count,
                    seed: self.seed,
                },
            },
        };
        mhe.validate()?;
        Ok(Scenario {
            grid,
            plan,
            transitions,
            noise: self.noise,
            horizon: self.horizon,
            mhe,
            replications: self.replications,
            seed: self.seed,
            estimators: self.estimators.clone(),
            output: base.join(&self.output),
            prior: self.prior,
            randomized_count,
            ekf: self.ekf,
        })
    }
}

impl Scenario {
    /// Loads and validates a scenario file; paths inside it are relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = ScenarioConfig::load(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve(base)
    }

    /// Number of windows, `K - M + 1`.
    pub fn window_count(&self) -> usize {
        self.horizon - self.mhe.window + 1
    }
}
