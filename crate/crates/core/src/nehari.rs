//! Minimization of `J_Γ` over the Nehari set by a projected, preconditioned
//! gradient flow with multi-start.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{fmax, PairClass};
use crate::discretization::SymTridiagonal;
use crate::functional::{energy_derivative, Evaluation, FunctionalError, ProblemSpec, SystemState};

/// Environment variable capping the number of restarts run in parallel.
pub const THREADS_ENV: &str = "NEHARI_THREADS";

const COLLAPSE_RATIO: f64 = 1e-6;
const PROJECTION_RETRIES: usize = 5;
const LEVEL_NOISE: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NehariError {
    #[error("group Gram matrix is singular")]
    SingularGram,
    #[error("projection coefficients not all positive: {t:?}")]
    NonPositiveProjection { t: Vec<f64> },
    #[error("every restart collapsed or failed to project")]
    NoAdmissibleStart,
    #[error("not converged after {iterations} iterations (relative gradient {gradient:e}, level {level})")]
    NotConverged { iterations: usize, gradient: f64, level: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub t: Vec<f64>,
    /// `‖M t - norms‖∞ / ‖norms‖∞`.
    pub residual: f64,
}

/// Solves `M t = norms` and requires every `t_h > 0`.
pub fn solve_projection(gram: &DMatrix<f64>, norms: &[f64]) -> Result<ProjectionResult, NehariError> {
    let k = norms.len();
    if gram.nrows() != k || gram.ncols() != k {
        return Err(NehariError::SingularGram);
    }
    let scale = gram.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(NehariError::SingularGram);
    }
    let rhs = DVector::from_column_slice(norms);
    let lu = gram.clone().lu();
    if lu.determinant().abs() <= 1e-14 * scale.powi(k as i32) {
        return Err(NehariError::SingularGram);
    }
    let t = lu.solve(&rhs).ok_or(NehariError::SingularGram)?;
    let nscale = rhs.amax().max(f64::MIN_POSITIVE);
    let residual = (gram * &t - &rhs).amax() / nscale;
    let t: Vec<f64> = t.iter().copied().collect();
    if t.iter().any(|&v| !(v > 0.0)) {
        return Err(NehariError::NonPositiveProjection { t });
    }
    Ok(ProjectionResult { t, residual })
}

/// Scales each group `h ∈ Γ` by `√t_h` so that all `Ψ_k` vanish.
pub fn project(
    spec: &ProblemSpec,
    u: &SystemState,
    groups: &[usize],
) -> Result<(ProjectionResult, SystemState), NehariError> {
    let ev = Evaluation::new(spec, u)?;
    let norms = ev.group_norms(spec.decomp());
    let gram = ev.gram(spec).restrict(groups);
    let sub_norms: Vec<f64> = groups.iter().map(|&h| norms[h]).collect();
    let proj = solve_projection(&gram, &sub_norms)?;
    let mut factors = vec![1.0; spec.m()];
    for (a, &h) in groups.iter().enumerate() {
        factors[h] = proj.t[a].sqrt();
    }
    Ok((proj, u.scale_groups(spec.decomp(), &factors)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Initial and largest step of the preconditioned flow.
    pub step: f64,
    /// Relative preconditioned gradient norm at which a run stops.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    /// When false an unconverged best run is returned instead of an error.
    pub require_convergence: bool,
    /// Parallel restarts; `None` reads `NEHARI_THREADS`.
    pub threads: Option<usize>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            step: 1.0,
            tol: 1e-8,
            max_iter: 5000,
            restarts: 20,
            seed: 0,
            require_convergence: true,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub seed: u64,
    pub level: Option<f64>,
    pub converged: bool,
    pub collapsed: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerResult {
    /// Groups of the original problem that were minimized over.
    pub groups: Vec<usize>,
    /// Original component index of each state component.
    pub components: Vec<usize>,
    pub state: SystemState,
    pub level: f64,
    pub nehari_residuals: Vec<f64>,
    /// `Σ_{i∈I_h} |u_i|₄²` per group at the end of the run.
    pub group_l4_mass: Vec<f64>,
    /// Smallest and largest group L⁴ mass seen along the accepted iterates.
    pub l4_mass_range: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub semi_trivial_groups: Vec<usize>,
    pub restart: usize,
    pub restarts: Vec<RestartSummary>,
}

impl MinimizerResult {
    pub fn restart_dispersion(&self) -> f64 {
        let levels: Vec<f64> = self.restarts.iter().filter_map(|r| r.level).collect();
        let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if levels.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

struct RunOutcome {
    state: SystemState,
    level: f64,
    iterations: usize,
    converged: bool,
    gradient: f64,
    collapsed: Vec<usize>,
    l4_range: (f64, f64),
}

fn group_l4_mass(spec: &ProblemSpec, ev: &Evaluation) -> Vec<f64> {
    spec.decomp()
        .groups()
        .map(|g| g.map(|i| ev.quartic[(i, i)].max(0.0).sqrt()).sum())
        .collect()
}

fn hump(grid_nodes: &[f64], radius: f64, center: f64, width: f64) -> Vec<f64> {
    grid_nodes
        .iter()
        .map(|&r| {
            let s = (r - center) / width;
            let bump = (1.0 - s * s).max(0.0).powi(2);
            bump * (1.0 - (r / radius).powi(2)).max(0.0)
        })
        .collect()
}

fn random_hump(rng: &mut ChaCha8Rng, nodes: &[f64], radius: f64) -> Vec<f64> {
    let center = rng.gen_range(0.0..0.6) * radius;
    let width = rng.gen_range(0.15..0.6) * radius;
    let amp = rng.gen_range(0.5..1.5);
    hump(nodes, radius, center, width).into_iter().map(|v| v * amp).collect()
}

/// Disjoint shells, one per group.
fn shell_start(spec: &ProblemSpec) -> SystemState {
    let nodes = spec.grid().nodes();
    let radius = spec.grid().radius();
    let m = spec.m() as f64;
    let mut comps = vec![Vec::new(); spec.d()];
    for (h, g) in spec.decomp().groups().enumerate() {
        let lo = h as f64 * radius / m;
        let hi = (h as f64 + 1.0) * radius / m;
        let shell: Vec<f64> = nodes
            .iter()
            .map(|&r| {
                if h == 0 {
                    (1.0 - (r / hi).powi(2)).max(0.0).powi(2)
                } else {
                    ((r - lo) * (hi - r)).max(0.0).powi(2)
                }
            })
            .collect();
        for i in g {
            comps[i] = shell.clone();
        }
    }
    SystemState::new(comps)
}

fn random_start(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> SystemState {
    let nodes = spec.grid().nodes();
    let radius = spec.grid().radius();
    SystemState::new((0..spec.d()).map(|_| random_hump(rng, nodes, radius)).collect())
}

fn initial_projection(
    spec: &ProblemSpec,
    mut u: SystemState,
    groups: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<SystemState> {
    let nodes = spec.grid().nodes().to_vec();
    let radius = spec.grid().radius();
    for _ in 0..=PROJECTION_RETRIES {
        match project(spec, &u, groups) {
            Ok((_, p)) => return Some(p),
            Err(NehariError::NonPositiveProjection { t }) => {
                let mut comps = u.into_components();
                for (a, &h) in groups.iter().enumerate() {
                    if t[a] > 0.0 {
                        continue;
                    }
                    let scale = spec
                        .decomp()
                        .group(h)
                        .map(|i| comps[i].iter().fold(0.0f64, |x, v| x.max(v.abs())))
                        .fold(0.0, f64::max);
                    for i in spec.decomp().group(h) {
                        let fresh = random_hump(rng, &nodes, radius);
                        for (v, f) in comps[i].iter_mut().zip(fresh) {
                            *v += 0.01 * scale * f;
                        }
                    }
                }
                u = SystemState::new(comps);
            }
            Err(_) => return None,
        }
    }
    None
}

/// `A_i⁻¹ ∂J/∂u_i` per component and the relative norm `(Σ ⟨∂J, A⁻¹∂J⟩ / Σ‖u_i‖²)^{1/2}`.
fn preconditioned_gradient(
    spec: &ProblemSpec,
    u: &SystemState,
    ev: &Evaluation,
    ops: &[SymTridiagonal],
) -> (Vec<Vec<f64>>, f64) {
    let n = spec.grid().n();
    let grad = energy_derivative(spec, u);
    let dirs: Vec<Vec<f64>> = grad
        .iter()
        .zip(ops)
        .map(|(g, op)| {
            let mut p = op.solve(&g[..n - 1]);
            p.push(0.0);
            p
        })
        .collect();
    let gnorm_sq: f64 = grad
        .iter()
        .zip(&dirs)
        .map(|(g, p)| g.iter().zip(p).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let unorm_sq: f64 = ev.norms.iter().sum();
    (dirs, (gnorm_sq.max(0.0) / unorm_sq.max(f64::MIN_POSITIVE)).sqrt())
}

fn relative_gradient(spec: &ProblemSpec, u: &SystemState, ev: &Evaluation, ops: &[SymTridiagonal]) -> f64 {
    preconditioned_gradient(spec, u, ev, ops).1
}

fn run_flow(spec: &ProblemSpec, start: SystemState, opts: &MinimizeOptions) -> Result<RunOutcome, NehariError> {
    let groups = spec.all_groups();
    let ops: Vec<SymTridiagonal> = spec.lambdas().iter().map(|&l| spec.grid().shifted_operator(l)).collect();

    let mut u = start;
    let mut ev = Evaluation::new(spec, &u)?;
    let mut level = ev.energy(spec, &groups);
    let initial_mass = group_l4_mass(spec, &ev);
    let mut l4_range = (
        initial_mass.iter().copied().fold(f64::INFINITY, f64::min),
        initial_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let mut tau = opts.step;
    let mut gradient = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let (dirs, g) = preconditioned_gradient(spec, &u, &ev, &ops);
        gradient = g;
        if gradient <= opts.tol {
            return Ok(RunOutcome {
                state: u,
                level,
                iterations: iter,
                converged: true,
                gradient,
                collapsed: Vec::new(),
                l4_range,
            });
        }

        let mut accepted = false;
        while tau >= 1e-14 {
            let cand = SystemState::new(
                u.components()
                    .iter()
                    .zip(&dirs)
                    .map(|(c, p)| c.iter().zip(p).map(|(a, b)| (a - tau * b).abs()).collect())
                    .collect(),
            );
            let projected = match project(spec, &cand, &groups) {
                Ok((_, p)) => p,
                Err(NehariError::SingularGram | NehariError::NonPositiveProjection { .. }) => {
                    tau *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let cand_ev = Evaluation::new(spec, &projected)?;
            let cand_level = cand_ev.energy(spec, &groups);
            // Near a critical point J only moves at rounding level; there a step
            // is kept when it shrinks the gradient instead.
            let noise = LEVEL_NOISE * level.abs();
            let within_noise = (cand_level - level).abs() <= noise
                && relative_gradient(spec, &projected, &cand_ev, &ops) < gradient;
            if cand_level < level - noise || within_noise {
                u = projected;
                ev = cand_ev;
                level = cand_level;
                tau = (tau * 1.5).min(opts.step);
                accepted = true;
                break;
            }
            tau *= 0.5;
        }

        let mass = group_l4_mass(spec, &ev);
        for &v in &mass {
            l4_range.0 = l4_range.0.min(v);
            l4_range.1 = l4_range.1.max(v);
        }
        let collapsed: Vec<usize> = mass
            .iter()
            .zip(&initial_mass)
            .enumerate()
            .filter(|(_, (m, m0))| **m < COLLAPSE_RATIO * **m0)
            .map(|(h, _)| h)
            .collect();
        if !collapsed.is_empty() || !accepted {
            return Ok(RunOutcome {
                state: u,
                level,
                iterations: iter + 1,
                converged: false,
                gradient,
                collapsed,
                l4_range,
            });
        }
    }
    Ok(RunOutcome {
        state: u,
        level,
        iterations: opts.max_iter,
        converged: false,
        gradient,
        collapsed: Vec::new(),
        l4_range,
    })
}

fn thread_count(opts: &MinimizeOptions) -> usize {
    opts.threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

fn check_options(opts: &MinimizeOptions) -> Result<(), NehariError> {
    if !(opts.step > 0.0) || !(opts.tol > 0.0) || opts.max_iter == 0 || opts.restarts == 0 {
        return Err(NehariError::InvalidOptions(format!(
            "step {}, tol {}, max_iter {}, restarts {}",
            opts.step, opts.tol, opts.max_iter, opts.restarts
        )));
    }
    Ok(())
}

fn check_same_group_cooperation(spec: &ProblemSpec) -> Result<(), NehariError> {
    let d = spec.d();
    for i in 0..d {
        for j in 0..d {
            if spec.decomp().classify_pair(i, j).map_err(FunctionalError::from)? == PairClass::SameGroup
                && spec.coupling().get(i, j) < 0.0
            {
                return Err(NehariError::HypothesisViolated(format!(
                    "beta[{i}][{j}] = {} < 0 within a group",
                    spec.coupling().get(i, j)
                )));
            }
        }
    }
    Ok(())
}

/// Least level of `J_Γ` over the Nehari set of the groups `Γ`.
///
/// Restart 0 starts from disjoint shells, the others from seeded random humps
/// (`seed + restart`). The best run is chosen by level with the restart index
/// as tiebreaker, so the result does not depend on scheduling.
pub fn minimize(spec: &ProblemSpec, groups: &[usize], opts: &MinimizeOptions) -> Result<MinimizerResult, NehariError> {
    check_options(opts)?;
    check_same_group_cooperation(spec)?;
    if groups.is_empty() || groups.iter().any(|&h| h >= spec.m()) {
        return Err(NehariError::InvalidOptions(format!("bad group subset {groups:?}")));
    }
    let sub = spec.restrict(groups);
    let sub_groups = sub.all_groups();

    let run_one = |restart: usize| -> (RestartSummary, Option<Result<RunOutcome, NehariError>>) {
        let seed = opts.seed.wrapping_add(restart as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = if restart == 0 {
            shell_start(&sub)
        } else {
            random_start(&sub, &mut rng)
        };
        let mut summary = RestartSummary {
            restart,
            seed,
            level: None,
            converged: false,
            collapsed: false,
            iterations: 0,
        };
        let Some(projected) = initial_projection(&sub, start, &sub_groups, &mut rng) else {
            return (summary, None);
        };
        let outcome = run_flow(&sub, projected, opts);
        if let Ok(o) = &outcome {
            summary.level = Some(o.level);
            summary.converged = o.converged;
            summary.collapsed = !o.collapsed.is_empty();
            summary.iterations = o.iterations;
        }
        (summary, Some(outcome))
    };

    let threads = thread_count(opts).min(opts.restarts);
    let runs: Vec<_> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| NehariError::InvalidOptions(e.to_string()))?;
        pool.install(|| (0..opts.restarts).into_par_iter().map(run_one).collect())
    } else {
        (0..opts.restarts).map(run_one).collect()
    };

    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, RunOutcome)> = None;
    let mut first_error = None;
    for (summary, outcome) in runs {
        let restart = summary.restart;
        summaries.push(summary);
        match outcome {
            Some(Ok(o)) if o.collapsed.is_empty() => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => o.level < b.level,
                };
                if better {
                    best = Some((restart, o));
                }
            }
            Some(Err(e)) => {
                first_error.get_or_insert(e);
            }
            _ => {}
        }
    }
    let Some((restart, o)) = best else {
        return Err(first_error.unwrap_or(NehariError::NoAdmissibleStart));
    };
    if opts.require_convergence && !o.converged {
        return Err(NehariError::NotConverged {
            iterations: o.iterations,
            gradient: o.gradient,
            level: o.level,
        });
    }
    let ev = Evaluation::new(&sub, &o.state)?;
    Ok(MinimizerResult {
        groups: groups.to_vec(),
        components: spec.components_of(groups),
        nehari_residuals: ev.nehari_residuals(&sub, &sub_groups),
        group_l4_mass: group_l4_mass(&sub, &ev),
        l4_mass_range: o.l4_range,
        state: o.state,
        level: o.level,
        iterations: o.iterations,
        converged: o.converged,
        gradient_norm: o.gradient,
        semi_trivial_groups: o.collapsed,
        restart,
        restarts: summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    pub restart_levels: Vec<Option<f64>>,
    pub dispersion: f64,
    pub result: MinimizerResult,
}

pub fn compute_level(spec: &ProblemSpec, groups: &[usize], opts: &MinimizeOptions) -> Result<LevelReport, NehariError> {
    let result = minimize(spec, groups, opts)?;
    Ok(LevelReport {
        level: result.level,
        restart_levels: result.restarts.iter().map(|r| r.level).collect(),
        dispersion: result.restart_dispersion(),
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupClassification {
    pub group: usize,
    /// Fitted unit direction `X` with `u_i ≈ X_i w`.
    pub direction: Vec<f64>,
    /// `(Σ|u_i - X_i w|₂²)^{1/2} / (Σ|u_i|₂²)^{1/2}`.
    pub residual: f64,
    pub distance_to_maximizers: f64,
    /// `f_max - f(X)`.
    pub f_gap: f64,
    pub f_max: f64,
    pub maximizers: Vec<Vec<f64>>,
    pub zero_component_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub groups: Vec<GroupClassification>,
}

/// Fits `u_i ≈ X_i w` per group and compares `X` with the maximizers of `f`.
pub fn classify_minimizer(spec: &ProblemSpec, result: &MinimizerResult) -> Result<ClassificationReport, NehariError> {
    let sub = spec.restrict(&result.groups);
    let grid = sub.grid();
    let mut out = Vec::new();
    for (a, g) in sub.decomp().groups().enumerate() {
        let comps: Vec<usize> = g.collect();
        let l0 = sub.lambdas()[comps[0]];
        if comps.iter().any(|&i| sub.lambdas()[i] != l0) {
            return Err(NehariError::HypothesisViolated(format!(
                "unequal lambdas within group {}",
                result.groups[a]
            )));
        }
        let block = sub.coupling().sub_block(&comps);
        if !block.is_cooperative() {
            return Err(NehariError::HypothesisViolated(format!(
                "negative coupling within group {}",
                result.groups[a]
            )));
        }
        let k = comps.len();
        let fields: Vec<&[f64]> = comps.iter().map(|&i| result.state.component(i)).collect();
        let gram = DMatrix::from_fn(k, k, |p, q| grid.mass_unchecked(fields[p], fields[q]));
        let eig = gram.clone().symmetric_eigen();
        let top = eig.eigenvalues.imax();
        let mut x: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
        if x.iter().sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        let total = gram.trace();
        let residual = if total > 0.0 {
            ((total - eig.eigenvalues[top]).max(0.0) / total).sqrt()
        } else {
            0.0
        };
        let sm = fmax(&block).map_err(FunctionalError::from)?;
        let f_gap = sm.f_max - block.quartic_form(&x);
        out.push(GroupClassification {
            group: result.groups[a],
            distance_to_maximizers: sm.distance_to(&x),
            zero_component_warning: x.iter().any(|v| v.abs() < 1e-3),
            direction: x,
            residual,
            f_gap,
            f_max: sm.f_max,
            maximizers: sm.maximizers,
        });
    }
    Ok(ClassificationReport { groups: out })
}
