//! Radial discretization of the ball `B_R` in R^4.
//!
//! Profiles are continuous piecewise-linear functions of `r` with nodal values
//! on `0 = r_0 < ... < r_{n-1} = R`. The measure is `dx = 2π² r³ dr`.
//!
//! * `weights[k] = ∫ φ_k r³ dr` (so the volume is exact);
//! * the flux Laplacian uses `c_k = 8 V_k / (r_{k+1}² - r_k²)` with
//!   `V_k = Σ_{j≤k} w_j`, which reproduces `Δ r² = 8` at every node including
//!   the origin and satisfies summation by parts exactly;
//! * mass and quartic integrals are exact for piecewise-linear profiles
//!   (4-point Gauss–Legendre per cell).

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::GaussLegendre;

pub const MIN_NODES: usize = 16;
pub const SPHERE_AREA: f64 = 2.0 * PI * PI;
const GRADING: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("bad grid parameters: {0}")]
    BadParameters(String),
    #[error("field has {found} values, grid has {expected} nodes")]
    GridMismatch { expected: usize, found: usize },
    #[error("iteration did not converge: {0}")]
    IterationNotConverged(String),
    #[error("lambda = {lambda} outside (-{lambda1}, 0)")]
    LambdaOutOfRange { lambda: f64, lambda1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    Uniform,
    /// `r = R sinh(a s) / sinh(a)`, finer near the origin.
    Graded,
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    radius: f64,
    kind: GridKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    flux: Vec<f64>,
    mass_diag: Vec<f64>,
    mass_off: Vec<f64>,
    quad_s: [f64; 4],
    quad_w: Vec<[f64; 4]>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.radius == other.radius && self.kind == other.kind && self.nodes.len() == other.nodes.len()
    }
}

impl RadialGrid {
    pub fn new(radius: f64, n: usize, kind: GridKind) -> Result<Self, DiscretizationError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(DiscretizationError::BadParameters(format!("radius {radius} must be positive")));
        }
        if n < MIN_NODES {
            return Err(DiscretizationError::BadParameters(format!(
                "n = {n} is below the minimum {MIN_NODES}"
            )));
        }
        let last = (n - 1) as f64;
        let nodes: Vec<f64> = (0..n)
            .map(|k| match kind {
                _ if k == n - 1 => radius,
                GridKind::Uniform => radius * k as f64 / last,
                GridKind::Graded => radius * (GRADING * k as f64 / last).sinh() / GRADING.sinh(),
            })
            .collect();

        let gl = GaussLegendre::new(4);
        let quad_s: [f64; 4] = std::array::from_fn(|q| 0.5 * (gl.nodes[q] + 1.0));
        let mut quad_w = Vec::with_capacity(n - 1);
        let mut mass_diag = vec![0.0; n];
        let mut mass_off = vec![0.0; n - 1];
        let mut weights = vec![0.0; n];
        for k in 0..n - 1 {
            let (a, b) = (nodes[k], nodes[k + 1]);
            let h = b - a;
            let w: [f64; 4] = std::array::from_fn(|q| {
                let r = a + h * quad_s[q];
                0.5 * h * gl.weights[q] * r * r * r
            });
            for q in 0..4 {
                let s = quad_s[q];
                mass_diag[k] += w[q] * (1.0 - s) * (1.0 - s);
                mass_diag[k + 1] += w[q] * s * s;
                mass_off[k] += w[q] * s * (1.0 - s);
                weights[k] += w[q] * (1.0 - s);
                weights[k + 1] += w[q] * s;
            }
            quad_w.push(w);
        }
        let mut flux = Vec::with_capacity(n - 1);
        let mut cumulative = 0.0;
        for k in 0..n - 1 {
            cumulative += weights[k];
            flux.push(8.0 * cumulative / (nodes[k + 1].powi(2) - nodes[k].powi(2)));
        }
        Ok(Self {
            radius,
            kind,
            nodes,
            weights,
            flux,
            mass_diag,
            mass_off,
            quad_s,
            quad_w,
        })
    }

    pub fn uniform(radius: f64, n: usize) -> Result<Self, DiscretizationError> {
        Self::new(radius, n, GridKind::Uniform)
    }

    /// Same family with every cell halved.
    pub fn refine(&self) -> Self {
        Self::new(self.radius, 2 * self.n() - 1, self.kind).expect("refinement of a valid grid")
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest cell width.
    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn check(&self, f: &[f64]) -> Result<(), DiscretizationError> {
        if f.len() != self.n() {
            return Err(DiscretizationError::GridMismatch {
                expected: self.n(),
                found: f.len(),
            });
        }
        Ok(())
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// `∫_{B_R} f` for a nodal field, `2π² Σ w_k f_k`.
    pub fn integrate(&self, f: &[f64]) -> Result<f64, DiscretizationError> {
        self.check(f)?;
        Ok(self.integrate_unchecked(f))
    }

    pub(crate) fn integrate_unchecked(&self, f: &[f64]) -> f64 {
        SPHERE_AREA * self.weights.iter().zip(f).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn volume(&self) -> f64 {
        SPHERE_AREA * self.weights.iter().sum::<f64>()
    }

    /// Discrete radial Laplacian; the boundary row is the Dirichlet row and returns 0.
    pub fn laplacian_apply(&self, f: &[f64]) -> Result<Vec<f64>, DiscretizationError> {
        self.check(f)?;
        let n = self.n();
        let mut out = vec![0.0; n];
        for k in 0..n - 1 {
            let right = self.flux[k] * (f[k + 1] - f[k]);
            let left = if k == 0 { 0.0 } else { self.flux[k - 1] * (f[k] - f[k - 1]) };
            out[k] = (right - left) / self.weights[k];
        }
        Ok(out)
    }

    /// `∫ ∇u·∇v` through the flux form.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> Result<f64, DiscretizationError> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.dirichlet_unchecked(u, v))
    }

    pub(crate) fn dirichlet_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        SPHERE_AREA
            * (0..self.n() - 1)
                .map(|k| self.flux[k] * (u[k + 1] - u[k]) * (v[k + 1] - v[k]))
                .sum::<f64>()
    }

    /// `∫ u v` for the piecewise-linear interpolants.
    pub fn mass_form(&self, u: &[f64], v: &[f64]) -> Result<f64, DiscretizationError> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.mass_unchecked(u, v))
    }

    pub(crate) fn mass_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.n() {
            s += self.mass_diag[k] * u[k] * v[k];
        }
        for k in 0..self.n() - 1 {
            s += self.mass_off[k] * (u[k] * v[k + 1] + u[k + 1] * v[k]);
        }
        SPHERE_AREA * s
    }

    /// Values of the interpolant at the four quadrature points of every cell.
    pub fn at_quadrature(&self, u: &[f64]) -> Vec<[f64; 4]> {
        (0..self.n() - 1)
            .map(|k| std::array::from_fn(|q| u[k] + (u[k + 1] - u[k]) * self.quad_s[q]))
            .collect()
    }

    /// `∫ g` where `g` is given at the quadrature points.
    pub fn cell_integral(&self, g: &[[f64; 4]]) -> f64 {
        SPHERE_AREA
            * self
                .quad_w
                .iter()
                .zip(g)
                .map(|(w, v)| (0..4).map(|q| w[q] * v[q]).sum::<f64>())
                .sum::<f64>()
    }

    /// Load vector `(∫ g φ_k)_k` for `g` given at the quadrature points.
    pub fn hat_load(&self, g: &[[f64; 4]]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (k, (w, v)) in self.quad_w.iter().zip(g).enumerate() {
            for q in 0..4 {
                let s = self.quad_s[q];
                let x = SPHERE_AREA * w[q] * v[q];
                out[k] += x * (1.0 - s);
                out[k + 1] += x * s;
            }
        }
        out
    }

    /// `∫ u² v²`, exact for the interpolants.
    pub fn quartic_pair(&self, u: &[f64], v: &[f64]) -> Result<f64, DiscretizationError> {
        self.check(u)?;
        self.check(v)?;
        let uq = self.at_quadrature(u);
        let vq = self.at_quadrature(v);
        Ok(quartic_from_quadrature(self, &uq, &vq))
    }

    /// `∫ u⁴`.
    pub fn l4_pow4(&self, u: &[f64]) -> Result<f64, DiscretizationError> {
        self.quartic_pair(u, u)
    }

    /// Stiffness plus `sigma` times mass, on the interior nodes `0..n-1`.
    pub fn shifted_operator(&self, sigma: f64) -> SymTridiagonal {
        let m = self.n() - 1;
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        for k in 0..m {
            diag[k] = SPHERE_AREA * (self.flux[k] + if k > 0 { self.flux[k - 1] } else { 0.0 })
                + sigma * SPHERE_AREA * self.mass_diag[k];
            if k + 1 < m {
                off[k] = -SPHERE_AREA * self.flux[k] + sigma * SPHERE_AREA * self.mass_off[k];
            }
        }
        SymTridiagonal { diag, off }
    }

    /// Consistent mass applied to `u` on interior nodes.
    pub(crate) fn mass_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for k in 0..n {
            out[k] += SPHERE_AREA * self.mass_diag[k] * u[k];
        }
        for k in 0..n - 1 {
            out[k] += SPHERE_AREA * self.mass_off[k] * u[k + 1];
            out[k + 1] += SPHERE_AREA * self.mass_off[k] * u[k];
        }
        out
    }

    /// Smallest eigenvalue of the discrete Dirichlet problem on this grid.
    pub fn discrete_lambda1(&self) -> Result<f64, DiscretizationError> {
        let op = self.shifted_operator(0.0);
        let mut u: Vec<f64> = self.nodes.iter().map(|r| 1.0 - (r / self.radius).powi(2)).collect();
        let mut lambda = f64::INFINITY;
        for _ in 0..500 {
            let mu = self.mass_apply(&u);
            let mut next = op.solve(&mu[..self.n() - 1]);
            next.push(0.0);
            let num = self.dirichlet_unchecked(&next, &next);
            let den = self.mass_unchecked(&next, &next);
            let new_lambda = num / den;
            let scale = den.sqrt();
            u = next.into_iter().map(|v| v / scale).collect();
            if (new_lambda - lambda).abs() <= 1e-15 * new_lambda {
                return Ok(new_lambda);
            }
            lambda = new_lambda;
        }
        Err(DiscretizationError::IterationNotConverged("inverse power iteration".into()))
    }

    /// Profiles as CSV with header `r,u1,...,ud`.
    pub fn profiles_csv(&self, fields: &[Vec<f64>]) -> Result<String, DiscretizationError> {
        for f in fields {
            self.check(f)?;
        }
        let mut out = String::from("r");
        for i in 1..=fields.len() {
            write!(out, ",u{i}").unwrap();
        }
        out.push('\n');
        for (k, r) in self.nodes.iter().enumerate() {
            write!(out, "{r:e}").unwrap();
            for f in fields {
                write!(out, ",{:e}", f[k]).unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub(crate) fn quartic_from_quadrature(grid: &RadialGrid, uq: &[[f64; 4]], vq: &[[f64; 4]]) -> f64 {
    let g: Vec<[f64; 4]> = uq
        .iter()
        .zip(vq)
        .map(|(a, b)| std::array::from_fn(|q| a[q] * a[q] * b[q] * b[q]))
        .collect();
    grid.cell_integral(&g)
}

/// Symmetric tridiagonal matrix with a Thomas solve.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        c[0] = if n > 1 { self.off[0] / denom } else { 0.0 };
        d[0] = rhs[0] / denom;
        for k in 1..n {
            denom = self.diag[k] - self.off[k - 1] * c[k - 1];
            if k + 1 < n {
                c[k] = self.off[k] / denom;
            }
            d[k] = (rhs[k] - self.off[k - 1] * d[k - 1]) / denom;
        }
        for k in (0..n - 1).rev() {
            d[k] -= c[k] * d[k + 1];
        }
        d
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|k| {
                let mut s = self.diag[k] * x[k];
                if k > 0 {
                    s += self.off[k - 1] * x[k - 1];
                }
                if k + 1 < n {
                    s += self.off[k] * x[k + 1];
                }
                s
            })
            .collect()
    }
}

/// First Dirichlet eigenvalue of `-Δ` on the ball, extrapolated from this grid
/// and its refinement.
pub fn dirichlet_lambda1(grid: &RadialGrid) -> Result<f64, DiscretizationError> {
    let coarse = grid.discrete_lambda1()?;
    let fine = grid.refine().discrete_lambda1()?;
    Ok((4.0 * fine - coarse) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SobolevOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 20_000,
        }
    }
}

/// `S = min_i inf (∫|∇u|² + λ_i ∫u²) / |u|₄²` over the discrete space.
///
/// The quotient is decreasing in λ, so only the most negative λ matters.
pub fn sobolev_s(grid: &RadialGrid, lambdas: &[f64], opts: SobolevOptions) -> Result<f64, DiscretizationError> {
    if lambdas.is_empty() {
        return Err(DiscretizationError::BadParameters("no lambdas".into()));
    }
    let lambda1 = dirichlet_lambda1(grid)?.min(grid.discrete_lambda1()?);
    for &lambda in lambdas {
        if !(lambda < 0.0 && lambda > -lambda1) {
            return Err(DiscretizationError::LambdaOutOfRange { lambda, lambda1 });
        }
    }
    let lambda = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let op = grid.shifted_operator(lambda);
    let r = grid.radius();
    let mut best = f64::INFINITY;
    for width in [0.5, 0.25, 0.1] {
        let start = grid.sample(|x| (1.0 - (x / r).powi(2)).max(0.0) / (1.0 + (x / (width * r)).powi(2)));
        best = best.min(quotient_flow(grid, &op, lambda, start, opts)?);
    }
    Ok(best)
}

fn quotient_value(grid: &RadialGrid, lambda: f64, u: &[f64]) -> (f64, f64, f64) {
    let n = grid.dirichlet_unchecked(u, u) + lambda * grid.mass_unchecked(u, u);
    let l = grid.l4_pow4(u).expect("sized field");
    (n / l.sqrt(), n, l)
}

fn quotient_flow(
    grid: &RadialGrid,
    op: &SymTridiagonal,
    lambda: f64,
    mut u: Vec<f64>,
    opts: SobolevOptions,
) -> Result<f64, DiscretizationError> {
    let n = grid.n();
    let normalize = |u: &mut Vec<f64>| {
        let l = grid.l4_pow4(u).unwrap().powf(0.25);
        u.iter_mut().for_each(|v| *v /= l);
    };
    normalize(&mut u);
    let (mut q, _, _) = quotient_value(grid, lambda, &u);
    let mut tau = 0.5;
    for _ in 0..opts.max_iter {
        // With |u|_4 = 1 the preconditioned gradient is 2u - (N/2) A^{-1} ∂L.
        let (_, nval, _) = quotient_value(grid, lambda, &u);
        let uq = grid.at_quadrature(&u);
        let cubed: Vec<[f64; 4]> = uq.iter().map(|a| std::array::from_fn(|i| 4.0 * a[i].powi(3))).collect();
        let load = grid.hat_load(&cubed);
        let mut w = op.solve(&load[..n - 1]);
        w.push(0.0);
        let g: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 2.0 * a - 0.5 * nval * b).collect();
        let gnorm = (grid.dirichlet_unchecked(&g, &g) + lambda * grid.mass_unchecked(&g, &g)).max(0.0).sqrt();
        if gnorm <= opts.tol * nval.sqrt() {
            return Ok(q);
        }
        loop {
            let mut cand: Vec<f64> = u.iter().zip(&g).map(|(a, b)| (a - tau * b).abs()).collect();
            cand[n - 1] = 0.0;
            normalize(&mut cand);
            let (qc, _, _) = quotient_value(grid, lambda, &cand);
            if qc <= q {
                let stalled = q - qc <= 1e-15 * q;
                u = cand;
                q = qc;
                tau = (tau * 1.25).min(0.5);
                if stalled {
                    return Ok(q);
                }
                break;
            }
            tau *= 0.5;
            if tau < 1e-12 {
                return Ok(q);
            }
        }
    }
    Err(DiscretizationError::IterationNotConverged("Sobolev quotient flow".into()))
}
