use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use nehari_core::algebra::fmax;
use nehari_core::bubbles::{level_table, limit_level};
use nehari_core::estimates::{
    check_hypotheses, competitor_disjoint, compute_thresholds, default_centers, default_eps_sweep, delta_coefficients,
    verify_energy_estimates, CompetitorReport, Hypothesis, ThresholdOptions, VerifyOptions,
};
use nehari_core::functional::ProblemSpec;
use nehari_core::nehari::{classify_minimizer, minimize, MinimizerResult, RestartSummary};
use nehari_core::{Classify, FailureKind};

use crate::config::{ConfigError, ParsedConfig};
use crate::report::{Report, Status, Timings, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Thresholds,
    Fmax,
    Solve,
    Verify,
    Competitor,
    LimitLevels,
    Classify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Thresholds => "thresholds",
            Command::Fmax => "fmax",
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Competitor => "competitor",
            Command::LimitLevels => "limit-levels",
            Command::Classify => "classify",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{message}")]
    Core { kind: FailureKind, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => EXIT_USAGE,
            RunError::Core { kind, .. } => match kind {
                FailureKind::Hypothesis => EXIT_HYPOTHESIS,
                FailureKind::Numerical => EXIT_NUMERICAL,
                FailureKind::Input => EXIT_USAGE,
            },
        }
    }
}

fn core<E: Classify + std::fmt::Display>(e: E) -> RunError {
    RunError::Core {
        kind: e.kind(),
        message: e.to_string(),
    }
}

/// Successful command output before it is written to disk.
struct Outcome {
    results: Value,
    exit_code: i32,
    files: Vec<(&'static str, String)>,
}

impl Outcome {
    fn ok(results: Value) -> Self {
        Self {
            results,
            exit_code: EXIT_OK,
            files: Vec::new(),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    groups: &'a [usize],
    components: &'a [usize],
    level: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    nehari_residuals: &'a [f64],
    group_l4_mass: &'a [f64],
    l4_mass_range: (f64, f64),
    semi_trivial_groups: &'a [usize],
    best_restart: usize,
    restart_dispersion: f64,
    restarts: &'a [RestartSummary],
}

fn solve_summary(r: &MinimizerResult) -> Value {
    to_value(&SolveSummary {
        groups: &r.groups,
        components: &r.components,
        level: r.level,
        converged: r.converged,
        iterations: r.iterations,
        gradient_norm: r.gradient_norm,
        nehari_residuals: &r.nehari_residuals,
        group_l4_mass: &r.group_l4_mass,
        l4_mass_range: r.l4_mass_range,
        semi_trivial_groups: &r.semi_trivial_groups,
        best_restart: r.restart,
        restart_dispersion: r.restart_dispersion(),
        restarts: &r.restarts,
    })
}

/// All `d` components, zero outside the minimized groups.
fn full_profiles(spec: &ProblemSpec, r: &MinimizerResult) -> Result<String, RunError> {
    let n = spec.grid().n();
    let mut fields = vec![vec![0.0; n]; spec.d()];
    for (a, &i) in r.components.iter().enumerate() {
        fields[i] = r.state.component(a).to_vec();
    }
    spec.grid().profiles_csv(&fields).map_err(core)
}

fn sweep_csv(rows: &[&CompetitorReport]) -> String {
    let mut out = String::from("eps,upper_bound,target,satisfied\n");
    for r in rows {
        writeln!(out, "{:e},{:e},{:e},{}", r.eps, r.upper_bound, r.target, r.satisfied).unwrap();
    }
    out
}

fn hypothesis_families(configured: Hypothesis) -> Vec<Hypothesis> {
    let alpha = match configured {
        Hypothesis::WeakCrossCoupling { alpha } => alpha,
        _ => 2.0,
    };
    vec![
        Hypothesis::MixedCoupling,
        Hypothesis::UniformBlocks,
        Hypothesis::WeakCrossCoupling { alpha },
        Hypothesis::SingletonGroups,
        Hypothesis::LimitSplitting,
    ]
}

fn execute(command: Command, parsed: &ParsedConfig) -> Result<Outcome, RunError> {
    let cfg = &parsed.config;
    let spec = cfg.problem()?;
    match command {
        Command::Thresholds => {
            let t = compute_thresholds(
                &spec,
                &ThresholdOptions {
                    eps: cfg.sweep.eps.clone(),
                    ..Default::default()
                },
            )
            .map_err(core)?;
            let checks: Vec<_> = hypothesis_families(cfg.hypothesis)
                .into_iter()
                .map(|h| check_hypotheses(&spec, &t, h))
                .collect();
            let configured = check_hypotheses(&spec, &t, cfg.hypothesis);
            let mut out = Outcome::ok(json!({
                "thresholds": to_value(&t),
                "theta_note": "theta uses the levels l_h only; the L4 floor term is monitored by solve",
                "hypotheses": to_value(&checks),
                "configured_hypothesis": to_value(&configured),
            }));
            if !configured.passed {
                out.exit_code = EXIT_HYPOTHESIS;
            }
            Ok(out)
        }
        Command::Fmax => {
            let table = level_table(spec.coupling(), spec.decomp()).map_err(core)?;
            let groups = spec
                .decomp()
                .groups()
                .map(|g| {
                    let comps: Vec<usize> = g.collect();
                    let r = fmax(&spec.coupling().sub_block(&comps)).map_err(core)?;
                    Ok(json!({ "components": comps, "f_max": r.f_max, "maximizers": r.maximizers, "degenerate": r.degenerate }))
                })
                .collect::<Result<Vec<_>, RunError>>()?;
            Ok(Outcome::ok(json!({ "groups": groups, "levels": to_value(&table) })))
        }
        Command::Solve => {
            let r = minimize(&spec, &cfg.solve_groups(), &cfg.minimize_options()).map_err(core)?;
            let mut out = Outcome::ok(solve_summary(&r));
            out.files.push(("profiles.csv", full_profiles(&spec, &r)?));
            Ok(out)
        }
        Command::Classify => {
            let r = minimize(&spec, &cfg.solve_groups(), &cfg.minimize_options()).map_err(core)?;
            let c = classify_minimizer(&spec, &r).map_err(core)?;
            let mut out = Outcome::ok(json!({ "solve": solve_summary(&r), "classification": to_value(&c) }));
            out.files.push(("profiles.csv", full_profiles(&spec, &r)?));
            Ok(out)
        }
        Command::Verify => {
            let opts = VerifyOptions {
                eps: cfg.sweep.eps.clone(),
                minimize: cfg.sweep.minimize.then(|| cfg.minimize_options()),
                mixed_rho: cfg.sweep.mixed_rho,
            };
            let v = verify_energy_estimates(&spec, &opts).map_err(core)?;
            let full: Vec<&CompetitorReport> = v.sweep.iter().filter_map(|row| row.competitors.last()).collect();
            let csv = sweep_csv(&full);
            let mut out = Outcome::ok(to_value(&v));
            out.files.push(("sweep.csv", csv));
            Ok(out)
        }
        Command::Competitor => {
            let table = level_table(spec.coupling(), spec.decomp()).map_err(core)?;
            let c_h = delta_coefficients(&spec).map_err(core)?;
            let groups = cfg.solve_groups();
            let (centers, rho) = default_centers(groups.len(), spec.grid().radius());
            let eps = cfg.sweep.eps.clone().unwrap_or_else(|| default_eps_sweep(&spec));
            let reports = eps
                .iter()
                .map(|&e| competitor_disjoint(&spec, &groups, e, &centers, rho, &table.l_h, &c_h))
                .collect::<Result<Vec<_>, _>>()
                .map_err(core)?;
            let csv = sweep_csv(&reports.iter().collect::<Vec<_>>());
            let mut out = Outcome::ok(to_value(&reports));
            out.files.push(("sweep.csv", csv));
            Ok(out)
        }
        Command::LimitLevels => {
            let l = limit_level(spec.coupling(), spec.decomp()).map_err(core)?;
            Ok(Outcome::ok(to_value(&l)))
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs one command, writes `report.json` and any data files into `out_dir`,
/// and returns the report together with the process exit code.
pub fn run(command: Command, parsed: &ParsedConfig, out_dir: &Path) -> Result<Report, RunError> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let (results, status) = match execute(command, parsed) {
        Ok(outcome) => {
            for (name, contents) in &outcome.files {
                write(&out_dir.join(name), contents)?;
            }
            (
                outcome.results,
                Status {
                    exit_code: outcome.exit_code,
                    error: None,
                },
            )
        }
        Err(e @ RunError::Io { .. }) => return Err(e),
        Err(e) => (
            Value::Null,
            Status {
                exit_code: e.exit_code(),
                error: Some(e.to_string()),
            },
        ),
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: command.name().to_string(),
        seed: parsed.config.solver.seed,
        config: parsed.config.clone(),
        defaulted: parsed.defaulted.clone(),
        status,
        results,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    write(&out_dir.join("report.json"), &report.to_json())?;
    Ok(report)
}
