//! The energy functional, group Gram matrices and Nehari residuals on a
//! radial grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{is_strictly_diagonally_dominant, AlgebraError, CouplingMatrix, GroupDecomposition};
use crate::discretization::{dirichlet_lambda1, DiscretizationError, RadialGrid};

/// Relative tolerance for "= 0" memberships.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("lambda[{index}] = {lambda} outside (-{lambda1}, 0)")]
    LambdaOutOfRange { index: usize, lambda: f64, lambda1: f64 },
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Grid, coefficients and decomposition of one problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    grid: RadialGrid,
    lambdas: Vec<f64>,
    coupling: CouplingMatrix,
    decomp: GroupDecomposition,
    lambda1: f64,
}

impl ProblemSpec {
    pub fn new(
        grid: RadialGrid,
        lambdas: Vec<f64>,
        coupling: CouplingMatrix,
        decomp: GroupDecomposition,
    ) -> Result<Self, FunctionalError> {
        let d = lambdas.len();
        if coupling.dim() != d || decomp.d() != d {
            return Err(FunctionalError::DimensionMismatch(format!(
                "{d} lambdas, coupling {}x{}, decomposition of {}",
                coupling.dim(),
                coupling.dim(),
                decomp.d()
            )));
        }
        // The discrete eigenvalue is the binding one for coercivity on the grid.
        let lambda1 = dirichlet_lambda1(&grid)?.min(grid.discrete_lambda1()?);
        for (index, &lambda) in lambdas.iter().enumerate() {
            if !(lambda < 0.0 && lambda > -lambda1) {
                return Err(FunctionalError::LambdaOutOfRange { index, lambda, lambda1 });
            }
        }
        Ok(Self {
            grid,
            lambdas,
            coupling,
            decomp,
            lambda1,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn decomp(&self) -> &GroupDecomposition {
        &self.decomp
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn d(&self) -> usize {
        self.lambdas.len()
    }

    pub fn m(&self) -> usize {
        self.decomp.m()
    }

    /// Components belonging to the listed groups, in group order.
    pub fn components_of(&self, groups: &[usize]) -> Vec<usize> {
        groups.iter().flat_map(|&h| self.decomp.group(h)).collect()
    }

    /// The sub-problem made of the listed groups only.
    pub fn restrict(&self, groups: &[usize]) -> Self {
        let comps = self.components_of(groups);
        Self {
            grid: self.grid.clone(),
            lambdas: comps.iter().map(|&i| self.lambdas[i]).collect(),
            coupling: self.coupling.sub_block(&comps),
            decomp: self.decomp.restrict(groups),
            lambda1: self.lambda1,
        }
    }

    pub fn all_groups(&self) -> Vec<usize> {
        (0..self.m()).collect()
    }
}

/// `d` nodal profiles, each vanishing on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    components: Vec<Vec<f64>>,
}

impl SystemState {
    pub fn new(mut components: Vec<Vec<f64>>) -> Self {
        for c in &mut components {
            if let Some(last) = c.last_mut() {
                *last = 0.0;
            }
        }
        Self { components }
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        Self::new(vec![vec![0.0; n]; d])
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn abs(&self) -> Self {
        Self::new(
            self.components
                .iter()
                .map(|c| c.iter().map(|v| v.abs()).collect())
                .collect(),
        )
    }

    pub fn select(&self, comps: &[usize]) -> Self {
        Self::new(comps.iter().map(|&i| self.components[i].clone()).collect())
    }

    /// `u + t h`.
    pub fn axpy(&self, t: f64, h: &SystemState) -> Self {
        Self::new(
            self.components
                .iter()
                .zip(&h.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * y).collect())
                .collect(),
        )
    }

    /// Scales every component of group `h` by `factors[h]`.
    pub fn scale_groups(&self, decomp: &GroupDecomposition, factors: &[f64]) -> Self {
        let mut out = self.clone();
        for (h, g) in decomp.groups().enumerate() {
            for i in g {
                out.components[i].iter_mut().for_each(|v| *v *= factors[h]);
            }
        }
        out
    }

    fn check(&self, spec: &ProblemSpec) -> Result<(), FunctionalError> {
        if self.d() != spec.d() {
            return Err(FunctionalError::DimensionMismatch(format!(
                "state has {} components, problem has {}",
                self.d(),
                spec.d()
            )));
        }
        for c in &self.components {
            spec.grid.check(c)?;
        }
        Ok(())
    }
}

/// `M_hk = Σ_{(i,j) ∈ I_h × I_k} β_ij ∫u_i²u_j²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGram(pub DMatrix<f64>);

impl GroupGram {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Principal sub-matrix on the listed groups.
    pub fn restrict(&self, groups: &[usize]) -> DMatrix<f64> {
        let k = groups.len();
        DMatrix::from_fn(k, k, |a, b| self.0[(groups[a], groups[b])])
    }
}

/// Per-state integrals shared by the energy, gradient and Gram matrix.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `‖u_i‖_i²` per component.
    pub norms: Vec<f64>,
    /// `∫u_i²u_j²`.
    pub quartic: DMatrix<f64>,
}

impl Evaluation {
    pub fn new(spec: &ProblemSpec, u: &SystemState) -> Result<Self, FunctionalError> {
        u.check(spec)?;
        let grid = &spec.grid;
        let d = u.d();
        let norms = (0..d)
            .map(|i| norm_unchecked(spec, i, u.component(i)))
            .collect();
        let quad: Vec<Vec<[f64; 4]>> = u.components().iter().map(|c| grid.at_quadrature(c)).collect();
        let mut quartic = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = crate::discretization::quartic_from_quadrature(grid, &quad[i], &quad[j]);
                quartic[(i, j)] = v;
                quartic[(j, i)] = v;
            }
        }
        Ok(Self { norms, quartic })
    }

    pub fn group_norms(&self, decomp: &GroupDecomposition) -> Vec<f64> {
        decomp.groups().map(|g| g.map(|i| self.norms[i]).sum()).collect()
    }

    pub fn gram(&self, spec: &ProblemSpec) -> GroupGram {
        let m = spec.m();
        let decomp = &spec.decomp;
        let mut g = DMatrix::zeros(m, m);
        for h in 0..m {
            for k in 0..m {
                let mut s = 0.0;
                for i in decomp.group(h) {
                    for j in decomp.group(k) {
                        s += spec.coupling.get(i, j) * self.quartic[(i, j)];
                    }
                }
                g[(h, k)] = s;
            }
        }
        GroupGram(g)
    }

    pub fn energy(&self, spec: &ProblemSpec, groups: &[usize]) -> f64 {
        let norms = self.group_norms(&spec.decomp);
        let gram = self.gram(spec);
        let quad: f64 = groups.iter().map(|&k| norms[k]).sum();
        let mut quart = 0.0;
        for &k in groups {
            for &l in groups {
                quart += gram.0[(k, l)];
            }
        }
        0.5 * quad - 0.25 * quart
    }

    pub fn nehari_residuals(&self, spec: &ProblemSpec, groups: &[usize]) -> Vec<f64> {
        let norms = self.group_norms(&spec.decomp);
        let gram = self.gram(spec);
        groups
            .iter()
            .map(|&k| norms[k] - groups.iter().map(|&h| gram.0[(k, h)]).sum::<f64>())
            .collect()
    }
}

fn norm_unchecked(spec: &ProblemSpec, i: usize, u: &[f64]) -> f64 {
    spec.grid.dirichlet_unchecked(u, u) + spec.lambdas[i] * spec.grid.mass_unchecked(u, u)
}

/// `‖u‖_i² = ∫|∇u|² + λ_i ∫u²`.
pub fn norm_i(spec: &ProblemSpec, i: usize, u: &[f64]) -> Result<f64, FunctionalError> {
    spec.grid.check(u)?;
    if i >= spec.d() {
        return Err(FunctionalError::DimensionMismatch(format!("component {i} of {}", spec.d())));
    }
    Ok(norm_unchecked(spec, i, u))
}

/// `J_Γ(u) = 1/2 Σ_{k∈Γ} ‖u_k‖² - 1/4 Σ_{k,l∈Γ} M_kl`.
pub fn energy_j(spec: &ProblemSpec, u: &SystemState, groups: &[usize]) -> Result<f64, FunctionalError> {
    Ok(Evaluation::new(spec, u)?.energy(spec, groups))
}

/// Nodal field `g` with `∫ g·h = dJ(u)[h]` for every boundary-zero `h`;
/// componentwise a discrete `-Δu_i + λ_i u_i - u_i Σ_j β_ij u_j²`.
pub fn gradient_j(spec: &ProblemSpec, u: &SystemState) -> Result<SystemState, FunctionalError> {
    u.check(spec)?;
    let raw = energy_derivative(spec, u);
    let w = spec.grid.weights();
    let area = crate::discretization::SPHERE_AREA;
    Ok(SystemState::new(
        raw.into_iter()
            .map(|c| c.iter().zip(w).map(|(v, wk)| v / (area * wk)).collect())
            .collect(),
    ))
}

/// `∂J/∂u_{i,k}` with respect to the nodal values.
pub(crate) fn energy_derivative(spec: &ProblemSpec, u: &SystemState) -> Vec<Vec<f64>> {
    let grid = &spec.grid;
    let d = u.d();
    let n = grid.n();
    let quad: Vec<Vec<[f64; 4]>> = u.components().iter().map(|c| grid.at_quadrature(c)).collect();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let ui = u.component(i);
        let op = grid.shifted_operator(spec.lambdas[i]);
        let mut lin = op.apply(&ui[..n - 1]);
        lin.push(0.0);
        let cubic: Vec<[f64; 4]> = (0..n - 1)
            .map(|c| {
                std::array::from_fn(|q| {
                    let s: f64 = (0..d).map(|j| spec.coupling.get(i, j) * quad[j][c][q].powi(2)).sum();
                    quad[i][c][q] * s
                })
            })
            .collect();
        let load = grid.hat_load(&cubic);
        let mut g: Vec<f64> = lin.iter().zip(&load).map(|(a, b)| a - b).collect();
        g[n - 1] = 0.0;
        out.push(g);
    }
    out
}

pub fn group_gram(spec: &ProblemSpec, u: &SystemState) -> Result<GroupGram, FunctionalError> {
    Ok(Evaluation::new(spec, u)?.gram(spec))
}

/// `Ψ_k = ‖u_k‖² - Σ_{h∈Γ} M_kh` for `k ∈ Γ`.
pub fn nehari_residuals(spec: &ProblemSpec, u: &SystemState, groups: &[usize]) -> Result<Vec<f64>, FunctionalError> {
    Ok(Evaluation::new(spec, u)?.nehari_residuals(spec, groups))
}

/// Membership in the Nehari set: all groups nontrivial and all `|Ψ_k| ≤ tol ‖u_k‖²`.
pub fn on_nehari_set(spec: &ProblemSpec, u: &SystemState, groups: &[usize], tol: f64) -> Result<bool, FunctionalError> {
    let ev = Evaluation::new(spec, u)?;
    let norms = ev.group_norms(&spec.decomp);
    let res = ev.nehari_residuals(spec, groups);
    Ok(groups
        .iter()
        .zip(&res)
        .all(|(&k, r)| norms[k] > 0.0 && r.abs() <= tol * norms[k]))
}

pub fn in_diagonally_dominant_set(spec: &ProblemSpec, u: &SystemState) -> Result<bool, FunctionalError> {
    Ok(is_strictly_diagonally_dominant(group_gram(spec, u)?.entries()))
}
