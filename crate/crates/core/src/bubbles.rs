//! Whole-space objects: Aubin–Talenti bubbles, ground states of cooperative
//! sub-systems, their levels and the overlap of separated bubbles.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{fmax, AlgebraError, CouplingMatrix, GroupDecomposition, PairClass};
use crate::discretization::{DiscretizationError, RadialGrid, SPHERE_AREA};
use crate::quadrature::{composite, gl20, graded_breaks, GaussLegendre};

/// `32π²/3`, the closed form used as a reference.
pub const S_TILDE_SQ_EXACT: f64 = 32.0 * PI * PI / 3.0;

const WHOLE_SPACE_CUTOFF: f64 = 1e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BubbleError {
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("cooperation violated: beta[{i}][{j}] = {beta} < 0")]
    CooperationViolated { i: usize, j: usize, beta: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
}

/// `U_{ε,y}(x) = 2√2 ε / (ε² + |x - y|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub epsilon: f64,
    pub center: [f64; 4],
}

impl Bubble {
    pub fn new(epsilon: f64, center: [f64; 4]) -> Self {
        assert!(epsilon > 0.0, "bubble scale must be positive");
        Self { epsilon, center }
    }

    pub fn at_origin(epsilon: f64) -> Self {
        Self::new(epsilon, [0.0; 4])
    }

    pub fn radial(&self, dist: f64) -> f64 {
        bubble_profile(self.epsilon, dist)
    }
}

pub fn bubble_profile(eps: f64, dist: f64) -> f64 {
    2.0 * SQRT_2 * eps / (eps * eps + dist * dist)
}

pub fn bubble_derivative(eps: f64, dist: f64) -> f64 {
    let q = eps * eps + dist * dist;
    -4.0 * SQRT_2 * eps * dist / (q * q)
}

pub fn bubble_eval(b: &Bubble, x: &[f64; 4]) -> f64 {
    let d2: f64 = x.iter().zip(&b.center).map(|(p, q)| (p - q).powi(2)).sum();
    b.radial(d2.sqrt())
}

/// `2π² ∫_0^∞ f(r) r³ dr` for `f` varying on scale `scale`, with a panel
/// estimate of the error from two rules of different order.
pub fn radial_whole_space<F: Fn(f64) -> f64>(f: F, scale: f64, cutoff: f64) -> (f64, f64) {
    let breaks = graded_breaks(0.0, cutoff, 0.0, scale * 0.05, 1.3);
    let g = |r: f64| f(r) * r * r * r;
    let fine = composite(gl20(), &breaks, g);
    let coarse = composite(&GaussLegendre::new(12), &breaks, g);
    (SPHERE_AREA * fine, SPHERE_AREA * (fine - coarse).abs())
}

/// `S̃² = ∫|∇U|² = ∫U⁴` over R⁴, computed by quadrature.
pub fn sobolev_tilde_sq() -> Result<f64, BubbleError> {
    let (grad, egrad) = radial_whole_space(|r| bubble_derivative(1.0, r).powi(2), 1.0, WHOLE_SPACE_CUTOFF);
    let (quartic, equart) = radial_whole_space(|r| bubble_profile(1.0, r).powi(4), 1.0, WHOLE_SPACE_CUTOFF);
    // Tails beyond the cutoff: ∫U⁴ ≤ 32π²/R⁴, ∫|∇U|² ≤ 32π²/R².
    let tail = 32.0 * PI * PI / WHOLE_SPACE_CUTOFF.powi(2);
    let err = egrad.max(equart) + tail;
    if err > 1e-10 * quartic || (grad - quartic).abs() > 1e-10 * quartic {
        return Err(BubbleError::QuadratureNotConverged(format!(
            "estimated error {err:e}, gradient/quartic mismatch {:e}",
            (grad - quartic).abs()
        )));
    }
    Ok(quartic)
}

/// Gradient and quartic integrals of `U_{ε,0}` over R⁴.
pub fn bubble_integrals(eps: f64) -> (f64, f64) {
    let cutoff = WHOLE_SPACE_CUTOFF * eps;
    let (g, _) = radial_whole_space(|r| bubble_derivative(eps, r).powi(2), eps, cutoff);
    let (q, _) = radial_whole_space(|r| bubble_profile(eps, r).powi(4), eps, cutoff);
    (g, q)
}

fn check_cooperative(b: &CouplingMatrix) -> Result<(), BubbleError> {
    let d = b.dim();
    for i in 0..d {
        for j in 0..d {
            if i != j && b.get(i, j) < 0.0 {
                return Err(BubbleError::CooperationViolated { i, j, beta: b.get(i, j) });
            }
        }
    }
    Ok(())
}

/// `l_h = S̃² / (4 f_max)` for a cooperative block.
pub fn subsystem_level(b_sub: &CouplingMatrix) -> Result<f64, BubbleError> {
    check_cooperative(b_sub)?;
    let f = fmax(b_sub)?.f_max;
    Ok(sobolev_tilde_sq()? / (4.0 * f))
}

/// `V = X₀ f_max^{-1/2} U_{ε,y}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemGroundState {
    pub direction: Vec<f64>,
    pub f_max: f64,
    pub bubble: Bubble,
}

impl SubsystemGroundState {
    pub fn amplitudes(&self) -> Vec<f64> {
        let s = self.f_max.sqrt();
        self.direction.iter().map(|x| x / s).collect()
    }

    pub fn component_eval(&self, i: usize, x: &[f64; 4]) -> f64 {
        self.direction[i] / self.f_max.sqrt() * bubble_eval(&self.bubble, x)
    }

    /// `E(V) = 1/2 Σ∫|∇V_i|² - 1/4 Σ β_ij ∫V_i²V_j²` by quadrature.
    pub fn energy(&self, b_sub: &CouplingMatrix) -> f64 {
        let (g, q) = bubble_integrals(self.bubble.epsilon);
        let a = self.amplitudes();
        let d = a.len();
        let grad: f64 = a.iter().map(|x| x * x * g).sum();
        let mut quart = 0.0;
        for i in 0..d {
            for j in 0..d {
                quart += b_sub.get(i, j) * a[i] * a[i] * a[j] * a[j] * q;
            }
        }
        0.5 * grad - 0.25 * quart
    }
}

pub fn subsystem_ground_state(
    b_sub: &CouplingMatrix,
    eps: f64,
    center: [f64; 4],
) -> Result<SubsystemGroundState, BubbleError> {
    check_cooperative(b_sub)?;
    let r = fmax(b_sub)?;
    Ok(SubsystemGroundState {
        direction: r.representative().to_vec(),
        f_max: r.f_max,
        bubble: Bubble::new(eps, center),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTable {
    pub s_tilde_sq: f64,
    pub l_h: Vec<f64>,
    pub l_total: f64,
}

/// Levels `l_h` of every group block.
pub fn level_table(b: &CouplingMatrix, decomp: &GroupDecomposition) -> Result<LevelTable, BubbleError> {
    let s_tilde_sq = sobolev_tilde_sq()?;
    let mut l_h = Vec::with_capacity(decomp.m());
    for g in decomp.groups() {
        let block = b.sub_block(&g.collect::<Vec<_>>());
        check_cooperative(&block)?;
        l_h.push(s_tilde_sq / (4.0 * fmax(&block)?.f_max));
    }
    let l_total = l_h.iter().sum();
    Ok(LevelTable {
        s_tilde_sq,
        l_h,
        l_total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLevel {
    pub table: LevelTable,
    pub l_total: f64,
    pub not_attained: bool,
}

/// Level of the whole-space system with competing groups, `Σ l_h`, which is
/// never attained.
pub fn limit_level(b: &CouplingMatrix, decomp: &GroupDecomposition) -> Result<LimitLevel, BubbleError> {
    let d = decomp.d();
    if b.dim() != d {
        return Err(BubbleError::HypothesisViolated(format!(
            "coupling has dimension {} but the decomposition has d = {d}",
            b.dim()
        )));
    }
    if decomp.m() < 2 {
        return Err(BubbleError::HypothesisViolated("at least two groups are required".into()));
    }
    for i in 0..d {
        for j in 0..d {
            let beta = b.get(i, j);
            match decomp.classify_pair(i, j)? {
                PairClass::SameGroup if beta < 0.0 => {
                    return Err(BubbleError::HypothesisViolated(format!(
                        "beta[{i}][{j}] = {beta} must be >= 0 within a group"
                    )))
                }
                PairClass::CrossGroup if beta > 0.0 => {
                    return Err(BubbleError::HypothesisViolated(format!(
                        "beta[{i}][{j}] = {beta} must be <= 0 across groups"
                    )))
                }
                _ => {}
            }
        }
    }
    let m = decomp.m();
    let strictly_negative_pair = (0..m).any(|h1| {
        (h1 + 1..m).any(|h2| {
            decomp
                .group(h1)
                .all(|i| decomp.group(h2).all(|j| b.get(i, j) < 0.0))
        })
    });
    if !strictly_negative_pair {
        return Err(BubbleError::HypothesisViolated(
            "no pair of groups with all cross couplings strictly negative".into(),
        ));
    }
    let table = level_table(b, decomp)?;
    Ok(LimitLevel {
        l_total: table.l_total,
        table,
        not_attained: true,
    })
}

/// `∫_{R⁴} f(|x|) g(|x - s e₁|) dx` by the axial reduction
/// `∫∫ f(r) g(ρ(r,θ)) 4π r³ sin²θ dr dθ`.
///
/// `origin_scale` and `center_scale` are the length scales on which `f` and
/// `g` vary; `r_max` bounds the support (or truncation) in `r`.
pub fn axial_integral<F, G>(
    f: F,
    g: G,
    sep: f64,
    origin_scale: f64,
    center_scale: f64,
    r_max: f64,
    ratio: f64,
) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut breaks = graded_breaks(0.0, r_max, 0.0, origin_scale * 0.05, ratio);
    if sep > 0.0 && sep < r_max {
        breaks.extend(graded_breaks(0.0, r_max, sep, center_scale * 0.05, ratio));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * r_max);
    }
    axial_integral_on(f, g, sep, center_scale, &breaks, ratio)
}

/// As [`axial_integral`] with explicit radial panel breaks.
pub fn axial_integral_on<F, G>(f: F, g: G, sep: f64, center_scale: f64, breaks: &[f64], ratio: f64) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let rule = gl20();
    composite(rule, breaks, |r| {
        let fr = f(r);
        if fr == 0.0 || r == 0.0 {
            return 0.0;
        }
        let width = ((r - sep).powi(2) + center_scale * center_scale).sqrt() / r;
        let theta_breaks = graded_breaks(0.0, PI, 0.0, (0.05 * width).min(0.1), ratio);
        let inner = composite(rule, &theta_breaks, |t| {
            let rho2 = r * r + sep * sep - 2.0 * r * sep * t.cos();
            g(rho2.max(0.0).sqrt()) * t.sin().powi(2)
        });
        4.0 * PI * fr * r.powi(3) * inner
    })
}

/// `∫_{R⁴} U_{ε₁,0}² U_{ε₂,s e₁}²`.
pub fn bubble_overlap(eps1: f64, eps2: f64, separation: f64) -> Result<f64, BubbleError> {
    let r_max = separation + 1e5 * eps1.max(eps2);
    let run = |ratio: f64| {
        axial_integral(
            |r| bubble_profile(eps1, r).powi(2),
            |rho| bubble_profile(eps2, rho).powi(2),
            separation,
            eps1,
            eps2,
            r_max,
            ratio,
        )
    };
    let a = run(1.4);
    let b = run(1.2);
    // The truncated tail is O(ε⁴ r_max⁻⁴) relative to the core.
    if (a - b).abs() > 1e-8 * b.abs() {
        return Err(BubbleError::QuadratureNotConverged(format!(
            "overlap estimates {a:e} and {b:e} disagree"
        )));
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorSobolevResidual {
    /// `(Σ∫|∇v_i|²)² - 4 l_h ∫Σ β_ij v_i² v_j²`.
    pub residual: f64,
    /// `(Σ∫|∇v_i|²)²`, the natural size of both sides.
    pub scale: f64,
}

/// Residual of the vector Sobolev inequality for discrete profiles.
pub fn vector_sobolev_residual(
    grid: &RadialGrid,
    fields: &[Vec<f64>],
    b_sub: &CouplingMatrix,
) -> Result<VectorSobolevResidual, BubbleError> {
    let l_h = subsystem_level(b_sub)?;
    let mut grad = 0.0;
    for f in fields {
        grad += grid.dirichlet_form(f, f)?;
    }
    let mut quart = 0.0;
    for (i, fi) in fields.iter().enumerate() {
        for (j, fj) in fields.iter().enumerate() {
            quart += b_sub.get(i, j) * grid.quartic_pair(fi, fj)?;
        }
    }
    Ok(VectorSobolevResidual {
        residual: grad * grad - 4.0 * l_h * quart,
        scale: grad * grad,
    })
}

/// The same residual evaluated on the exact ground state over all of R⁴.
pub fn ground_state_sobolev_residual(
    state: &SubsystemGroundState,
    b_sub: &CouplingMatrix,
) -> Result<VectorSobolevResidual, BubbleError> {
    let l_h = subsystem_level(b_sub)?;
    let (g, q) = bubble_integrals(state.bubble.epsilon);
    let a = state.amplitudes();
    let grad: f64 = a.iter().map(|x| x * x * g).sum();
    let mut quart = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            quart += b_sub.get(i, j) * a[i] * a[i] * a[j] * a[j] * q;
        }
    }
    Ok(VectorSobolevResidual {
        residual: grad * grad - 4.0 * l_h * quart,
        scale: grad * grad,
    })
}
