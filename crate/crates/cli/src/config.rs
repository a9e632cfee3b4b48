//! Experiment configuration: a sectioned `key = value` file (TOML syntax).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nehari_core::algebra::{CouplingMatrix, GroupDecomposition};
use nehari_core::discretization::{GridKind, RadialGrid};
use nehari_core::estimates::Hypothesis;
use nehari_core::functional::{FunctionalError, ProblemSpec};
use nehari_core::nehari::MinimizeOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    fn validation(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// Number of nodes, including the origin and the boundary.
    pub n: usize,
    pub graded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub require_convergence: bool,
    /// Groups minimized by `solve` and `classify`; all groups when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Absolute ε values; the dyadic default is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    /// Whether `verify` also computes levels and mixed competitors.
    pub minimize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lambdas: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub groups: Vec<usize>,
    pub domain: Domain,
    pub grid: Grid,
    pub solver: Solver,
    pub sweep: Sweep,
    /// Hypothesis family whose failure makes `thresholds` exit with a hypothesis error.
    pub hypothesis: Hypothesis,
    pub output: Output,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Option<usize>,
    graded: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    step: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    restarts: Option<usize>,
    seed: Option<u64>,
    require_convergence: Option<bool>,
    groups: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    eps: Option<Vec<f64>>,
    minimize: Option<bool>,
    mixed_rho: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    lambdas: Vec<f64>,
    beta: Vec<Vec<f64>>,
    groups: Vec<usize>,
    #[serde(default)]
    domain: RawDomain,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    sweep: RawSweep,
    hypothesis: Option<Hypothesis>,
    #[serde(default)]
    output: RawOutput,
}

/// A validated configuration plus the keys that were filled from defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: ExperimentConfig,
    pub defaulted: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Defaults<'a>(&'a mut Vec<String>);

impl Defaults<'_> {
    fn take<T>(&mut self, key: &str, value: Option<T>, default: T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(key.to_string());
            default
        })
    }
}

pub fn parse_config(text: &str) -> Result<ParsedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let solver_defaults = MinimizeOptions::default();
    let mut defaulted = Vec::new();
    let mut d = Defaults(&mut defaulted);
    let config = ExperimentConfig {
        lambdas: raw.lambdas,
        beta: raw.beta,
        groups: raw.groups,
        domain: Domain {
            radius: d.take("domain.radius", raw.domain.radius, 1.0),
        },
        grid: Grid {
            n: d.take("grid.n", raw.grid.n, 1025),
            graded: d.take("grid.graded", raw.grid.graded, false),
        },
        solver: Solver {
            step: d.take("solver.step", raw.solver.step, solver_defaults.step),
            tol: d.take("solver.tol", raw.solver.tol, solver_defaults.tol),
            max_iter: d.take("solver.max_iter", raw.solver.max_iter, solver_defaults.max_iter),
            restarts: d.take("solver.restarts", raw.solver.restarts, solver_defaults.restarts),
            seed: d.take("solver.seed", raw.solver.seed, solver_defaults.seed),
            require_convergence: d.take(
                "solver.require_convergence",
                raw.solver.require_convergence,
                solver_defaults.require_convergence,
            ),
            groups: raw.solver.groups,
        },
        sweep: Sweep {
            eps: raw.sweep.eps,
            minimize: d.take("sweep.minimize", raw.sweep.minimize, true),
            mixed_rho: raw.sweep.mixed_rho,
        },
        hypothesis: d.take("hypothesis", raw.hypothesis, Hypothesis::MixedCoupling),
        output: Output {
            dir: d.take("output.dir", raw.output.dir, "out".to_string()),
        },
    };
    config.problem()?;
    Ok(ParsedConfig { config, defaulted })
}

impl ExperimentConfig {
    /// Builds and validates the discrete problem.
    pub fn problem(&self) -> Result<ProblemSpec, ConfigError> {
        let d = self.lambdas.len();
        if d == 0 {
            return Err(ConfigError::validation("lambdas", "at least one component is required"));
        }
        if self.beta.len() != d || self.beta.iter().any(|row| row.len() != d) {
            return Err(ConfigError::validation("beta", format!("must be a {d}x{d} matrix")));
        }
        let coupling = CouplingMatrix::from_rows(&self.beta).map_err(|e| ConfigError::validation("beta", e.to_string()))?;
        let decomp =
            GroupDecomposition::new(self.groups.clone(), d).map_err(|e| ConfigError::validation("groups", e.to_string()))?;
        if !(self.domain.radius > 0.0) {
            return Err(ConfigError::validation("domain.radius", "must be positive"));
        }
        let kind = if self.grid.graded { GridKind::Graded } else { GridKind::Uniform };
        let grid =
            RadialGrid::new(self.domain.radius, self.grid.n, kind).map_err(|e| ConfigError::validation("grid.n", e.to_string()))?;
        if let Some(gs) = &self.solver.groups {
            if gs.is_empty() || gs.iter().any(|&h| h >= decomp.m()) || gs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::validation(
                    "solver.groups",
                    "must be a strictly increasing list of group indices",
                ));
            }
        }
        if let Some(eps) = &self.sweep.eps {
            if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
                return Err(ConfigError::validation("sweep.eps", "must be a nonempty list of positive values"));
            }
        }
        ProblemSpec::new(grid, self.lambdas.clone(), coupling, decomp).map_err(|e| match e {
            FunctionalError::LambdaOutOfRange { .. } => {
                ConfigError::validation("lambdas", format!("out of (-lambda1, 0): {e}"))
            }
            other => ConfigError::validation("lambdas", other.to_string()),
        })
    }

    pub fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            step: self.solver.step,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            restarts: self.solver.restarts,
            seed: self.solver.seed,
            require_convergence: self.solver.require_convergence,
            threads: None,
        }
    }

    /// Groups used by `solve` and `classify`.
    pub fn solve_groups(&self) -> Vec<usize> {
        self.solver
            .groups
            .clone()
            .unwrap_or_else(|| (0..self.groups.len() - 1).collect())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
