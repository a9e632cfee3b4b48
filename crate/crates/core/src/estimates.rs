//! Explicit thresholds, cutoff-bubble competitors and hypothesis checks.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{fmax, gershgorin_lower_bound, maximize_concave_quadratic, AlgebraError, CouplingMatrix, PairClass};
use crate::bubbles::{axial_integral_on, bubble_derivative, bubble_profile, level_table, BubbleError};
use crate::discretization::{sobolev_s, DiscretizationError, SobolevOptions, SPHERE_AREA};
use crate::functional::{Evaluation, FunctionalError, ProblemSpec};
use crate::nehari::{minimize, MinimizeOptions, MinimizerResult, NehariError};
use crate::quadrature::{composite, gl20, graded_breaks};

/// Dyadic factors applied to the cutoff radius in the default sweep.
pub const SWEEP_EXPONENTS: std::ops::RangeInclusive<i32> = 2..=8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatesError {
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("geometry violated: {0}")]
    GeometryViolated(String),
    #[error("competitor Gram matrix not certified concave (Gershgorin bound {bound})")]
    NotConcave { bound: f64 },
    #[error("no epsilon in the sweep verifies the estimates: {0}")]
    SweepExhausted(String),
    #[error(transparent)]
    Bubble(#[from] BubbleError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Nehari(#[from] NehariError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// The quantities every threshold is derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInputs {
    pub s: f64,
    pub s_tilde_sq: f64,
    pub l_h: Vec<f64>,
    /// Per-group coefficients `C^h = Σ_{i∈I_h} 8 (X₀)_i² |λ_i| / f_max^h`.
    pub c_h: Vec<f64>,
    /// `max_h min_{i∈I_h} 1/β_ii`.
    pub inv_beta_factor: f64,
    pub eps_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub inputs: ThresholdInputs,
    pub s: f64,
    pub s_tilde_sq: f64,
    pub c_bar: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda: f64,
    pub theta: f64,
    pub t_hat: f64,
    pub l_h: Vec<f64>,
    pub l_total: f64,
    pub c_h: Vec<f64>,
    pub eps_star: f64,
    pub delta_star: f64,
}

/// `C̄ = 1/4 · max_h min_{i∈I_h}(1/β_ii) · m · S̃²`.
///
/// The best constant for the critical embedding on any open set equals the
/// whole-space one (dilations and translations), so the infimum over `m`
/// disjoint subdomains of the summed constants is `m S̃²`.
pub fn c_bar(s_tilde_sq: f64, m: usize, inv_beta_factor: f64) -> f64 {
    0.25 * inv_beta_factor * m as f64 * s_tilde_sq
}

/// `δ(ε) = 1/16 · min_h C^h · ε² |ln ε|`.
pub fn delta(c_h: &[f64], eps: f64) -> f64 {
    let c_min = c_h.iter().copied().fold(f64::INFINITY, f64::min);
    c_min * eps * eps * eps.ln().abs() / 16.0
}

impl ThresholdSet {
    /// Pure chain of formulas from the inputs.
    pub fn derive(inputs: ThresholdInputs) -> Self {
        let m = inputs.l_h.len();
        let s2 = inputs.s * inputs.s;
        let l_total: f64 = inputs.l_h.iter().sum();
        let c_bar = c_bar(inputs.s_tilde_sq, m, inputs.inv_beta_factor);
        let delta_star = delta(&inputs.c_h, inputs.eps_star);
        let lambda1 = s2 / (32.0 * c_bar);
        let lambda2 = s2 / (16.0 * (l_total - 2.0 * delta_star));
        let lambda3 = lambda1.min(lambda2);
        let lambda4 = delta_star * s2 / (8.0 * c_bar * l_total);
        let lambda = lambda3.min(lambda4);
        // The lower L⁴ bound entering θ has no explicit value; only the level terms are used.
        let theta = inputs.l_h.iter().copied().fold(f64::INFINITY, f64::min);
        let t_hat = 8.0 * inputs.l_h.iter().copied().fold(c_bar, f64::max) / theta;
        Self {
            s: inputs.s,
            s_tilde_sq: inputs.s_tilde_sq,
            c_bar,
            lambda1,
            lambda2,
            lambda3,
            lambda4,
            lambda,
            theta,
            t_hat,
            l_h: inputs.l_h.clone(),
            l_total,
            c_h: inputs.c_h.clone(),
            eps_star: inputs.eps_star,
            delta_star,
            inputs,
        }
    }

    pub fn delta(&self, eps: f64) -> f64 {
        delta(&self.c_h, eps)
    }
}

/// Quintic cutoff: 1 on `[0, ρ]`, 0 beyond `2ρ`, `C²` in between.
pub fn cutoff(r: f64, rho: f64) -> f64 {
    if r <= rho {
        1.0
    } else if r >= 2.0 * rho {
        0.0
    } else {
        let s = (r - rho) / rho;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

pub fn cutoff_derivative(r: f64, rho: f64) -> f64 {
    if r <= rho || r >= 2.0 * rho {
        0.0
    } else {
        let s = (r - rho) / rho;
        -30.0 * s * s * (1.0 - s) * (1.0 - s) / rho
    }
}

/// Integrals of `ξU_ε` about its own center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffIntegrals {
    /// `∫|∇(ξU)|²`
    pub gradient: f64,
    /// `∫ξ²U²`
    pub mass: f64,
    /// `∫ξ⁴U⁴`
    pub quartic: f64,
}

pub fn cutoff_bubble_integrals(eps: f64, rho: f64) -> CutoffIntegrals {
    let mut breaks = graded_breaks(0.0, 2.0 * rho, 0.0, 0.05 * eps, 1.3);
    breaks.push(rho);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let rule = gl20();
    let radial = |f: &dyn Fn(f64) -> f64| SPHERE_AREA * composite(rule, &breaks, |r| f(r) * r * r * r);
    let gradient = radial(&|r| {
        let d = cutoff_derivative(r, rho) * bubble_profile(eps, r) + cutoff(r, rho) * bubble_derivative(eps, r);
        d * d
    });
    let mass = radial(&|r| (cutoff(r, rho) * bubble_profile(eps, r)).powi(2));
    let quartic = radial(&|r| (cutoff(r, rho) * bubble_profile(eps, r)).powi(4));
    CutoffIntegrals { gradient, mass, quartic }
}

/// `ξ X₀ f_max^{-1/2} U_{ε,y}` for one group with its quadratic coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffBubble {
    pub group: usize,
    pub eps: f64,
    pub center: [f64; 4],
    pub rho: f64,
    /// `X₀_i f_max^{-1/2}` per component of the group.
    pub amplitudes: Vec<f64>,
    pub integrals: CutoffIntegrals,
    /// `A_h = Σ_i (∫|∇V̂_i|² + λ_i ∫V̂_i²)`.
    pub a: f64,
    /// `B_h = Σ_ij β_ij ∫V̂_i²V̂_j²`.
    pub b: f64,
}

/// Coefficients of a cutoff bubble with explicit data; `λ = 0` is allowed.
pub fn cutoff_bubble_coefficients(
    block: &CouplingMatrix,
    lambdas: &[f64],
    eps: f64,
    rho: f64,
) -> Result<(Vec<f64>, CutoffIntegrals, f64, f64), EstimatesError> {
    if !block.is_cooperative() {
        return Err(EstimatesError::HypothesisViolated("negative coupling within a group".into()));
    }
    let sm = fmax(block)?;
    let amplitudes: Vec<f64> = sm.representative().iter().map(|x| x / sm.f_max.sqrt()).collect();
    let integrals = cutoff_bubble_integrals(eps, rho);
    let a = amplitudes
        .iter()
        .zip(lambdas)
        .map(|(c, l)| c * c * (integrals.gradient + l * integrals.mass))
        .sum();
    let k = amplitudes.len();
    let mut b = 0.0;
    for i in 0..k {
        for j in 0..k {
            b += block.get(i, j) * amplitudes[i].powi(2) * amplitudes[j].powi(2) * integrals.quartic;
        }
    }
    Ok((amplitudes, integrals, a, b))
}

fn norm4(x: &[f64; 4]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist4(x: &[f64; 4], y: &[f64; 4]) -> f64 {
    let d: [f64; 4] = std::array::from_fn(|k| x[k] - y[k]);
    norm4(&d)
}

fn check_inside(radius: f64, center: &[f64; 4], rho: f64) -> Result<(), EstimatesError> {
    if norm4(center) + 2.0 * rho > radius * (1.0 + 1e-12) {
        return Err(EstimatesError::GeometryViolated(format!(
            "cutoff ball of radius {} around {center:?} leaves the domain",
            2.0 * rho
        )));
    }
    Ok(())
}

pub fn build_cutoff_bubble(
    spec: &ProblemSpec,
    group: usize,
    eps: f64,
    center: [f64; 4],
    rho: f64,
) -> Result<CutoffBubble, EstimatesError> {
    if !(eps > 0.0) || !(rho > 0.0) || eps >= rho {
        return Err(EstimatesError::GeometryViolated(format!("need 0 < eps = {eps} < rho = {rho}")));
    }
    check_inside(spec.grid().radius(), &center, rho)?;
    let comps: Vec<usize> = spec.decomp().group(group).collect();
    let block = spec.coupling().sub_block(&comps);
    let lambdas: Vec<f64> = comps.iter().map(|&i| spec.lambdas()[i]).collect();
    let (amplitudes, integrals, a, b) = cutoff_bubble_coefficients(&block, &lambdas, eps, rho)?;
    Ok(CutoffBubble {
        group,
        eps,
        center,
        rho,
        amplitudes,
        integrals,
        a,
        b,
    })
}

/// `max_{t>0} Σ (t_h A_h / 2 - t_h² B_h / 4) = 1/4 Σ A_h² / B_h`, at `t_h = A_h / B_h`.
pub fn disjoint_upper_bound(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let t: Vec<f64> = a.iter().zip(b).map(|(x, y)| x / y).collect();
    let value = a.iter().zip(b).map(|(x, y)| x * x / y).sum::<f64>() / 4.0;
    (value, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorReport {
    pub groups: Vec<usize>,
    pub eps: f64,
    pub centers: Vec<[f64; 4]>,
    pub rho: f64,
    pub t_star: Vec<f64>,
    pub upper_bound: f64,
    pub target: f64,
    pub satisfied: bool,
    pub a_h: Vec<f64>,
    pub b_h: Vec<f64>,
    /// Cross-group Gram entries, zero because the supports are disjoint.
    pub cross_gram_zero: bool,
}

/// Centers on a circle in the `x₁x₂` plane with disjoint cutoff balls that fit
/// in the ball of radius `radius`; returns the centers and the cutoff radius.
pub fn default_centers(k: usize, radius: f64) -> (Vec<[f64; 4]>, f64) {
    if k == 1 {
        return (vec![[0.0; 4]], radius / 2.0);
    }
    let s = (PI / k as f64).sin();
    let a = radius / (1.0 + s);
    let rho = a * s / 2.0;
    let centers = (0..k)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / k as f64;
            [a * phi.cos(), a * phi.sin(), 0.0, 0.0]
        })
        .collect();
    (centers, rho)
}

/// Upper bound for `c_Γ` from disjoint cutoff bubbles, one per group of `Γ`.
pub fn competitor_disjoint(
    spec: &ProblemSpec,
    groups: &[usize],
    eps: f64,
    centers: &[[f64; 4]],
    rho: f64,
    l_h: &[f64],
    c_h: &[f64],
) -> Result<CompetitorReport, EstimatesError> {
    if centers.len() != groups.len() {
        return Err(EstimatesError::GeometryViolated("one center per group is required".into()));
    }
    for (a, ca) in centers.iter().enumerate() {
        for cb in &centers[a + 1..] {
            if dist4(ca, cb) < 4.0 * rho * (1.0 - 1e-12) {
                return Err(EstimatesError::GeometryViolated(format!(
                    "cutoff balls around {ca:?} and {cb:?} overlap"
                )));
            }
        }
    }
    let bubbles = groups
        .iter()
        .zip(centers)
        .map(|(&h, &c)| build_cutoff_bubble(spec, h, eps, c, rho))
        .collect::<Result<Vec<_>, _>>()?;
    let a_h: Vec<f64> = bubbles.iter().map(|b| b.a).collect();
    let b_h: Vec<f64> = bubbles.iter().map(|b| b.b).collect();
    let (upper_bound, t_star) = disjoint_upper_bound(&a_h, &b_h);
    let target = groups.iter().map(|&h| l_h[h]).sum::<f64>() - delta(c_h, eps);
    Ok(CompetitorReport {
        groups: groups.to_vec(),
        eps,
        centers: centers.to_vec(),
        rho,
        t_star,
        upper_bound,
        target,
        satisfied: upper_bound < target,
        a_h,
        b_h,
        cross_gram_zero: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedCompetitorReport {
    pub report: CompetitorReport,
    /// Groups carried by the attained minimizer.
    pub attained_groups: Vec<usize>,
    pub attained_level: f64,
    pub gram: DMatrix<f64>,
    pub linear: Vec<f64>,
    pub gershgorin_bound: f64,
    pub all_t_positive: bool,
    pub kkt_residual: f64,
    /// Largest attained component value over the cutoff balls.
    pub pi_empirical: f64,
}

fn interp(nodes: &[f64], vals: &[f64], r: f64) -> f64 {
    if r >= *nodes.last().unwrap() {
        return 0.0;
    }
    let k = nodes.partition_point(|&x| x <= r).max(1) - 1;
    let s = (r - nodes[k]) / (nodes[k + 1] - nodes[k]);
    vals[k] + s * (vals[k + 1] - vals[k])
}

/// Bubble centers near the boundary, `|y| = R - 2ρ`, spaced on a circle.
pub fn boundary_centers(k: usize, radius: f64, rho: f64) -> Result<Vec<[f64; 4]>, EstimatesError> {
    let a = radius - 2.0 * rho;
    if a <= 0.0 {
        return Err(EstimatesError::GeometryViolated(format!("rho = {rho} too large")));
    }
    let centers: Vec<[f64; 4]> = (0..k)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / k as f64;
            [a * phi.cos(), a * phi.sin(), 0.0, 0.0]
        })
        .collect();
    if k > 1 && 2.0 * a * (PI / k as f64).sin() < 4.0 * rho {
        return Err(EstimatesError::GeometryViolated(format!("{k} cutoff balls of radius {} do not fit", 2.0 * rho)));
    }
    Ok(centers)
}

/// Upper bound for `c` from an attained minimizer on the groups `G` plus
/// cutoff bubbles for the remaining groups.
pub fn competitor_mixed(
    spec: &ProblemSpec,
    attained: &MinimizerResult,
    eps: f64,
    centers: &[[f64; 4]],
    rho: f64,
    l_h: &[f64],
    c_h: &[f64],
) -> Result<MixedCompetitorReport, EstimatesError> {
    let m = spec.m();
    let g_set = &attained.groups;
    let others: Vec<usize> = (0..m).filter(|h| !g_set.contains(h)).collect();
    if others.is_empty() || centers.len() != others.len() {
        return Err(EstimatesError::GeometryViolated(
            "one center per group outside the attained collection is required".into(),
        ));
    }
    for (a, ca) in centers.iter().enumerate() {
        for cb in &centers[a + 1..] {
            if dist4(ca, cb) < 4.0 * rho * (1.0 - 1e-12) {
                return Err(EstimatesError::GeometryViolated("cutoff balls overlap".into()));
            }
        }
    }
    let bubbles = others
        .iter()
        .zip(centers)
        .map(|(&h, &c)| build_cutoff_bubble(spec, h, eps, c, rho))
        .collect::<Result<Vec<_>, _>>()?;

    let sub = spec.restrict(g_set);
    let ev = Evaluation::new(&sub, &attained.state)?;
    let sub_gram = ev.gram(&sub);
    let sub_norms = ev.group_norms(sub.decomp());

    let mut gram = DMatrix::zeros(m, m);
    let mut linear = vec![0.0; m];
    for (a, &h) in g_set.iter().enumerate() {
        linear[h] = sub_norms[a];
        for (b, &k) in g_set.iter().enumerate() {
            gram[(h, k)] = sub_gram.0[(a, b)];
        }
    }
    for bubble in &bubbles {
        linear[bubble.group] = bubble.a;
        gram[(bubble.group, bubble.group)] = bubble.b;
    }

    let grid = sub.grid();
    let nodes = grid.nodes();
    let mut pi_empirical = 0.0f64;
    for bubble in &bubbles {
        let sep = norm4(&bubble.center);
        let lo = (sep - 2.0 * rho).max(0.0);
        let hi = (sep + 2.0 * rho).min(grid.radius());
        let mut breaks: Vec<f64> = nodes.iter().copied().filter(|&r| r > lo && r < hi).collect();
        breaks.extend(graded_breaks(lo, hi, sep, 0.05 * bubble.eps, 1.3));
        breaks.push(lo);
        breaks.push(hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * grid.radius());
        let g = |rho_dist: f64| (cutoff(rho_dist, rho) * bubble_profile(bubble.eps, rho_dist)).powi(2);
        let bubble_comps: Vec<usize> = spec.decomp().group(bubble.group).collect();
        for (a, &h) in g_set.iter().enumerate() {
            let mut entry = 0.0;
            for i in sub.decomp().group(a) {
                let u = attained.state.component(i);
                pi_empirical = pi_empirical.max(
                    nodes
                        .iter()
                        .zip(u)
                        .filter(|(r, _)| **r >= lo && **r <= hi)
                        .map(|(_, v)| v.abs())
                        .fold(0.0, f64::max),
                );
                let cross = axial_integral_on(|r| interp(nodes, u, r).powi(2), g, sep, bubble.eps, &breaks, 1.3);
                let orig_i = attained.components[i];
                for (c, &j) in bubble_comps.iter().enumerate() {
                    entry += spec.coupling().get(orig_i, j) * bubble.amplitudes[c].powi(2) * cross;
                }
            }
            gram[(h, bubble.group)] = entry;
            gram[(bubble.group, h)] = entry;
        }
    }

    let gershgorin_bound = gershgorin_lower_bound(&gram);
    if !(gershgorin_bound > 0.0) {
        return Err(EstimatesError::NotConcave { bound: gershgorin_bound });
    }
    let qp = maximize_concave_quadratic(&gram, &linear)?;
    let all_t_positive = qp.t.iter().all(|&t| t > 0.0);
    let target = attained.level + others.iter().map(|&h| l_h[h]).sum::<f64>() - delta(c_h, eps);
    let report = CompetitorReport {
        groups: (0..m).collect(),
        eps,
        centers: centers.to_vec(),
        rho,
        t_star: qp.t.clone(),
        upper_bound: qp.value,
        target,
        satisfied: qp.value < target,
        a_h: linear.clone(),
        b_h: (0..m).map(|h| gram[(h, h)]).collect(),
        cross_gram_zero: false,
    };
    Ok(MixedCompetitorReport {
        report,
        attained_groups: g_set.clone(),
        attained_level: attained.level,
        gram,
        linear,
        gershgorin_bound,
        all_t_positive,
        kkt_residual: qp.kkt_residual,
        pi_empirical,
    })
}

/// Cutoff radii, as fractions of `R`, tried for boundary bubbles.
pub const MIXED_RHO_FRACTIONS: [f64; 3] = [0.25, 0.1875, 0.125];
/// Range of `k` in `ε = 2^-k ρ` for mixed competitors.
pub const MIXED_EPS_EXPONENTS: std::ops::RangeInclusive<i32> = 3..=16;

/// Tries boundary bubbles of decreasing width; returns the first certified
/// competitor, or the one closest to its target when none is.
pub fn mixed_sweep(
    spec: &ProblemSpec,
    attained: &MinimizerResult,
    rhos: &[f64],
    l_h: &[f64],
    c_h: &[f64],
) -> Result<MixedCompetitorReport, EstimatesError> {
    let k = spec.m() - attained.groups.len();
    let mut best: Option<MixedCompetitorReport> = None;
    for &rho in rhos {
        let Ok(centers) = boundary_centers(k, spec.grid().radius(), rho) else {
            continue;
        };
        for e in MIXED_EPS_EXPONENTS {
            let rep = competitor_mixed(spec, attained, rho * 2f64.powi(-e), &centers, rho, l_h, c_h)?;
            if rep.report.satisfied && rep.all_t_positive {
                return Ok(rep);
            }
            let excess = |r: &MixedCompetitorReport| r.report.upper_bound - r.report.target;
            if best.as_ref().map_or(true, |b| excess(&rep) < excess(b)) {
                best = Some(rep);
            }
        }
    }
    best.ok_or_else(|| EstimatesError::GeometryViolated("no boundary bubble fits in the domain".into()))
}

fn check_same_group_nonnegative(spec: &ProblemSpec) -> Result<(), EstimatesError> {
    let d = spec.d();
    for i in 0..d {
        for j in 0..d {
            if spec.decomp().classify_pair(i, j)? == PairClass::SameGroup && spec.coupling().get(i, j) < 0.0 {
                return Err(EstimatesError::HypothesisViolated(format!(
                    "beta[{i}][{j}] = {} < 0 within a group",
                    spec.coupling().get(i, j)
                )));
            }
        }
    }
    Ok(())
}

/// `C^h` for every group.
pub fn delta_coefficients(spec: &ProblemSpec) -> Result<Vec<f64>, EstimatesError> {
    spec.decomp()
        .groups()
        .map(|g| {
            let comps: Vec<usize> = g.collect();
            let sm = fmax(&spec.coupling().sub_block(&comps))?;
            let x = sm.representative();
            Ok(comps
                .iter()
                .enumerate()
                .map(|(a, &i)| 8.0 * x[a] * x[a] / sm.f_max * spec.lambdas()[i].abs())
                .sum())
        })
        .collect()
}

/// Nonempty subsets of `0..m` in increasing bitmask order.
pub fn group_subsets(m: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << m))
        .map(|mask| (0..m).filter(|&h| mask & (1 << h) != 0).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub delta: f64,
    pub competitors: Vec<CompetitorReport>,
    pub all_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCheck {
    pub groups: Vec<usize>,
    pub level: f64,
    pub converged: bool,
    pub disjoint_upper_bound: f64,
    pub below_disjoint_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub sweep: Vec<SweepRow>,
    pub eps_star: f64,
    pub delta_star: f64,
    pub levels: Vec<LevelCheck>,
    pub mixed: Vec<MixedCompetitorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Absolute ε values; defaults to `2^-k ρ` for the full collection.
    pub eps: Option<Vec<f64>>,
    /// When set, levels `c_Γ` are computed and mixed competitors assembled.
    pub minimize: Option<MinimizeOptions>,
    /// Cutoff radius of the boundary bubbles in mixed competitors; defaults to `R/8`.
    pub mixed_rho: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            eps: None,
            minimize: None,
            mixed_rho: None,
        }
    }
}

pub fn default_eps_sweep(spec: &ProblemSpec) -> Vec<f64> {
    let (_, rho) = default_centers(spec.m(), spec.grid().radius());
    SWEEP_EXPONENTS.map(|k| rho * 2f64.powi(-k)).collect()
}

/// Sweeps ε, checks the disjoint competitor bound for every nonempty `Γ`
/// and, when minimization is enabled, the mixed bounds for every proper `G`.
pub fn verify_energy_estimates(spec: &ProblemSpec, opts: &VerifyOptions) -> Result<VerificationReport, EstimatesError> {
    check_same_group_nonnegative(spec)?;
    let table = level_table(spec.coupling(), spec.decomp())?;
    let c_h = delta_coefficients(spec)?;
    let radius = spec.grid().radius();
    let mut eps_list = opts.eps.clone().unwrap_or_else(|| default_eps_sweep(spec));
    eps_list.sort_by(|a, b| b.total_cmp(a));
    let subsets = group_subsets(spec.m());

    let mut sweep = Vec::new();
    for &eps in &eps_list {
        let mut competitors = Vec::new();
        for gamma in &subsets {
            let (centers, rho) = default_centers(gamma.len(), radius);
            competitors.push(competitor_disjoint(spec, gamma, eps, &centers, rho, &table.l_h, &c_h)?);
        }
        let all_satisfied = competitors.iter().all(|c| c.satisfied);
        sweep.push(SweepRow {
            eps,
            delta: delta(&c_h, eps),
            competitors,
            all_satisfied,
        });
    }
    let Some(best) = sweep.iter().find(|row| row.all_satisfied) else {
        let diag: Vec<String> = sweep
            .iter()
            .map(|row| {
                let worst = row
                    .competitors
                    .iter()
                    .map(|c| c.upper_bound - c.target)
                    .fold(f64::NEG_INFINITY, f64::max);
                format!("eps={:e}: worst excess {:e}", row.eps, worst)
            })
            .collect();
        return Err(EstimatesError::SweepExhausted(diag.join("; ")));
    };
    let eps_star = best.eps;
    let delta_star = best.delta;

    let mut levels = Vec::new();
    let mut mixed = Vec::new();
    if let Some(mopts) = &opts.minimize {
        let mut attained: Vec<(Vec<usize>, MinimizerResult)> = Vec::new();
        for (idx, gamma) in subsets.iter().enumerate() {
            let res = minimize(spec, gamma, mopts)?;
            let bound = best.competitors[idx].upper_bound;
            levels.push(LevelCheck {
                groups: gamma.clone(),
                level: res.level,
                converged: res.converged,
                disjoint_upper_bound: bound,
                below_disjoint_bound: res.level <= bound,
            });
            attained.push((gamma.clone(), res));
        }
        let rhos = match opts.mixed_rho {
            Some(r) => vec![r],
            None => MIXED_RHO_FRACTIONS.iter().map(|f| f * radius).collect(),
        };
        for (gamma, res) in &attained {
            if gamma.len() == spec.m() || !res.converged {
                continue;
            }
            mixed.push(mixed_sweep(spec, res, &rhos, &table.l_h, &c_h)?);
        }
    }
    Ok(VerificationReport {
        sweep,
        eps_star,
        delta_star,
        levels,
        mixed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub eps: Option<Vec<f64>>,
    pub sobolev: SobolevTolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevTolerance {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        let s = SobolevOptions::default();
        Self {
            eps: None,
            sobolev: SobolevTolerance {
                tol: s.tol,
                max_iter: s.max_iter,
            },
        }
    }
}

pub fn compute_thresholds(spec: &ProblemSpec, opts: &ThresholdOptions) -> Result<ThresholdSet, EstimatesError> {
    check_same_group_nonnegative(spec)?;
    let table = level_table(spec.coupling(), spec.decomp())?;
    let c_h = delta_coefficients(spec)?;
    let inv_beta_factor = spec
        .decomp()
        .groups()
        .map(|g| g.map(|i| 1.0 / spec.coupling().get(i, i)).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let s = sobolev_s(
        spec.grid(),
        spec.lambdas(),
        SobolevOptions {
            tol: opts.sobolev.tol,
            max_iter: opts.sobolev.max_iter,
        },
    )?;
    let verification = verify_energy_estimates(
        spec,
        &VerifyOptions {
            eps: opts.eps.clone(),
            ..Default::default()
        },
    )?;
    Ok(ThresholdSet::derive(ThresholdInputs {
        s,
        s_tilde_sq: table.s_tilde_sq,
        l_h: table.l_h,
        c_h,
        inv_beta_factor,
        eps_star: verification.eps_star,
    }))
}

/// Hypothesis families that can be checked against a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Hypothesis {
    /// Cooperation within groups, cross couplings below `Λ`.
    MixedCoupling,
    /// Equal λ and a common coupling inside each group above every `β_ii`,
    /// a common cross coupling below `Λ`.
    UniformBlocks,
    /// As `UniformBlocks` with `β_h > α/(α-1) max β_ii` and `|β_ij| ≤ Λ/(α d²)` across groups.
    WeakCrossCoupling { alpha: f64 },
    /// Every component its own group with all couplings below `Λ`.
    SingletonGroups,
    /// Whole-space splitting: cooperation within groups, competition across, and
    /// one pair of groups with all cross couplings strictly negative.
    LimitSplitting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub passed: bool,
    /// Positive when the clause holds with room to spare.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis: Hypothesis,
    pub clauses: Vec<Clause>,
    pub passed: bool,
}

fn clause(name: impl Into<String>, passed: bool, margin: f64) -> Clause {
    Clause {
        name: name.into(),
        passed,
        margin,
    }
}

fn pairs_of(spec: &ProblemSpec, class: PairClass) -> Vec<(usize, usize)> {
    match class {
        PairClass::SameGroup => spec.decomp().same_group_pairs(),
        PairClass::CrossGroup => spec.decomp().cross_group_pairs(),
        PairClass::Diagonal => (0..spec.d()).map(|i| (i, i)).collect(),
    }
}

fn min_over(spec: &ProblemSpec, pairs: &[(usize, usize)], f: impl Fn(f64) -> f64) -> f64 {
    pairs
        .iter()
        .map(|&(i, j)| f(spec.coupling().get(i, j)))
        .fold(f64::INFINITY, f64::min)
}

fn equal_lambdas_clause(spec: &ProblemSpec) -> Clause {
    let spread = spec
        .decomp()
        .groups()
        .map(|g| {
            let ls: Vec<f64> = g.map(|i| spec.lambdas()[i]).collect();
            let hi = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = ls.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max);
    clause("equal lambda within each group", spread == 0.0, -spread)
}

fn uniform_block_clauses(spec: &ProblemSpec, factor: f64, out: &mut Vec<Clause>) {
    let mut equal = true;
    let mut margin = f64::INFINITY;
    for g in spec.decomp().groups() {
        let comps: Vec<usize> = g.collect();
        if comps.len() < 2 {
            continue;
        }
        let beta_h = spec.coupling().get(comps[0], comps[1]);
        for &i in &comps {
            for &j in &comps {
                if i != j && spec.coupling().get(i, j) != beta_h {
                    equal = false;
                }
            }
        }
        let max_diag = comps.iter().map(|&i| spec.coupling().get(i, i)).fold(f64::NEG_INFINITY, f64::max);
        margin = margin.min(beta_h - factor * max_diag);
    }
    out.push(clause("common coupling within each group", equal, 0.0));
    let m = if margin.is_finite() { margin } else { 0.0 };
    out.push(clause("group coupling above the diagonal bound", m > 0.0 || margin.is_infinite(), m));
}

/// Itemized check of a hypothesis family with numeric margins.
pub fn check_hypotheses(spec: &ProblemSpec, thresholds: &ThresholdSet, hypothesis: Hypothesis) -> HypothesisReport {
    let lam = thresholds.lambda;
    let k1 = pairs_of(spec, PairClass::SameGroup);
    let k2 = pairs_of(spec, PairClass::CrossGroup);
    let lambda1 = spec.lambda1();
    let lambda_margin = spec
        .lambdas()
        .iter()
        .map(|&l| (-l).min(l + lambda1))
        .fold(f64::INFINITY, f64::min);
    let mut clauses = vec![clause("lambda in (-lambda1, 0)", lambda_margin > 0.0, lambda_margin)];
    let k1_margin = if k1.is_empty() { 0.0 } else { min_over(spec, &k1, |b| b) };
    let below_lambda = |clauses: &mut Vec<Clause>| {
        let m = if k2.is_empty() { lam } else { min_over(spec, &k2, |b| lam - b) };
        clauses.push(clause("beta < Lambda across groups", m > 0.0, m));
    };
    match hypothesis {
        Hypothesis::MixedCoupling => {
            clauses.push(clause("beta >= 0 within groups", k1_margin >= 0.0, k1_margin));
            below_lambda(&mut clauses);
        }
        Hypothesis::UniformBlocks => {
            clauses.push(equal_lambdas_clause(spec));
            uniform_block_clauses(spec, 1.0, &mut clauses);
            let common = k2.iter().all(|&(i, j)| {
                let (a, b) = k2[0];
                spec.coupling().get(i, j) == spec.coupling().get(a, b)
            });
            clauses.push(clause("common cross coupling", common, 0.0));
            below_lambda(&mut clauses);
        }
        Hypothesis::WeakCrossCoupling { alpha } => {
            clauses.push(clause("alpha > 1", alpha > 1.0, alpha - 1.0));
            clauses.push(equal_lambdas_clause(spec));
            uniform_block_clauses(spec, alpha / (alpha - 1.0), &mut clauses);
            let bound = lam / (alpha * (spec.d() * spec.d()) as f64);
            let m = if k2.is_empty() { bound } else { min_over(spec, &k2, |b| bound - b.abs()) };
            clauses.push(clause("|beta| <= Lambda/(alpha d^2) across groups", m >= 0.0, m));
        }
        Hypothesis::SingletonGroups => {
            let singletons = spec.m() == spec.d();
            clauses.push(clause("one component per group", singletons, 0.0));
            below_lambda(&mut clauses);
        }
        Hypothesis::LimitSplitting => {
            clauses.push(clause("at least two groups", spec.m() >= 2, spec.m() as f64 - 1.0));
            clauses.push(clause("beta >= 0 within groups", k1_margin >= 0.0, k1_margin));
            let k2_margin = if k2.is_empty() { 0.0 } else { min_over(spec, &k2, |b| -b) };
            clauses.push(clause("beta <= 0 across groups", k2_margin >= 0.0, k2_margin));
            let m = spec.m();
            let mut best = f64::NEG_INFINITY;
            for h1 in 0..m {
                for h2 in h1 + 1..m {
                    let worst = spec
                        .decomp()
                        .group(h1)
                        .flat_map(|i| spec.decomp().group(h2).map(move |j| (i, j)))
                        .map(|(i, j)| -spec.coupling().get(i, j))
                        .fold(f64::INFINITY, f64::min);
                    best = best.max(worst);
                }
            }
            clauses.push(clause("a pair of groups with strictly negative cross couplings", best > 0.0, best));
        }
    }
    let passed = clauses.iter().all(|c| c.passed);
    HypothesisReport {
        hypothesis,
        clauses,
        passed,
    }
}
