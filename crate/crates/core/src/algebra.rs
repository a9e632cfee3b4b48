//! Finite-dimensional pieces: group decompositions, coupling matrices, the
//! quartic sphere maximization `f_max`, diagonal dominance and a small
//! active-set solver for concave quadratics on the nonnegative orthant.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest component count accepted by [`fmax`] (face enumeration is `2^d`).
pub const FMAX_MAX_DIM: usize = 20;

const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("breakpoints must start at 0")]
    FirstNotZero,
    #[error("breakpoints must end at d = {d}, found {last}")]
    LastNotD { d: usize, last: usize },
    #[error("breakpoints must be strictly increasing (position {position})")]
    NotStrictlyIncreasing { position: usize },
    #[error("index ({i}, {j}) out of range for d = {d}")]
    IndexOutOfRange { i: usize, j: usize, d: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("quadratic form is not positive definite")]
    NotConcave,
}

/// An m-decomposition `0 = a_0 < a_1 < ... < a_m = d` of the components.
///
/// Components are 0-based: group `h` owns `a_h..a_{h+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDecomposition {
    breakpoints: Vec<usize>,
}

/// Relation between two components under a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairClass {
    Diagonal,
    /// `(i, j)` in K1: distinct components of the same group.
    SameGroup,
    /// `(i, j)` in K2: components of different groups.
    CrossGroup,
}

impl GroupDecomposition {
    pub fn new(breakpoints: Vec<usize>, d: usize) -> Result<Self, AlgebraError> {
        match breakpoints.first() {
            Some(0) => {}
            _ => return Err(AlgebraError::FirstNotZero),
        }
        for (position, w) in breakpoints.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(AlgebraError::NotStrictlyIncreasing {
                    position: position + 1,
                });
            }
        }
        let last = *breakpoints.last().unwrap();
        if last != d || breakpoints.len() < 2 {
            return Err(AlgebraError::LastNotD { d, last });
        }
        Ok(Self { breakpoints })
    }

    /// Every component in its own group (`m = d`).
    pub fn singletons(d: usize) -> Self {
        Self {
            breakpoints: (0..=d).collect(),
        }
    }

    /// A single group holding all `d` components.
    pub fn single_group(d: usize) -> Self {
        Self {
            breakpoints: vec![0, d],
        }
    }

    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }

    pub fn d(&self) -> usize {
        *self.breakpoints.last().unwrap()
    }

    pub fn m(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Component range of group `h`.
    pub fn group(&self, h: usize) -> Range<usize> {
        self.breakpoints[h]..self.breakpoints[h + 1]
    }

    pub fn groups(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.m()).map(move |h| self.group(h))
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.breakpoints[1..].partition_point(|&a| a <= i)
    }

    pub fn classify_pair(&self, i: usize, j: usize) -> Result<PairClass, AlgebraError> {
        let d = self.d();
        if i >= d || j >= d {
            return Err(AlgebraError::IndexOutOfRange { i, j, d });
        }
        Ok(if i == j {
            PairClass::Diagonal
        } else if self.group_of(i) == self.group_of(j) {
            PairClass::SameGroup
        } else {
            PairClass::CrossGroup
        })
    }

    /// Ordered pairs in K1.
    pub fn same_group_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs(PairClass::SameGroup)
    }

    /// Ordered pairs in K2.
    pub fn cross_group_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs(PairClass::CrossGroup)
    }

    fn pairs(&self, class: PairClass) -> Vec<(usize, usize)> {
        let d = self.d();
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if self.classify_pair(i, j).ok() == Some(class) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Decomposition induced on the components of the listed groups, in order.
    pub fn restrict(&self, groups: &[usize]) -> Self {
        let mut breakpoints = vec![0];
        for &h in groups {
            let len = self.group(h).len();
            breakpoints.push(breakpoints.last().unwrap() + len);
        }
        Self { breakpoints }
    }
}

/// Symmetric coupling matrix with positive diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct CouplingMatrix {
    entries: DMatrix<f64>,
}

impl CouplingMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, AlgebraError> {
        let d = entries.nrows();
        if d == 0 || entries.ncols() != d {
            return Err(AlgebraError::InvalidMatrix("coupling matrix must be square and nonempty".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(AlgebraError::InvalidMatrix("non-finite entry".into()));
        }
        for i in 0..d {
            if entries[(i, i)] <= 0.0 {
                return Err(AlgebraError::InvalidMatrix(format!("beta[{i}][{i}] must be positive")));
            }
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(AlgebraError::InvalidMatrix(format!(
                        "beta is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AlgebraError> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(AlgebraError::InvalidMatrix("coupling matrix must be square".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Principal sub-block on the given components.
    pub fn sub_block(&self, components: &[usize]) -> Self {
        let k = components.len();
        Self {
            entries: DMatrix::from_fn(k, k, |a, b| self.entries[(components[a], components[b])]),
        }
    }

    /// True when every off-diagonal entry is nonnegative.
    pub fn is_cooperative(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.get(i, j) >= 0.0))
    }

    /// `f(X) = sum_ij beta_ij x_i^2 x_j^2`.
    pub fn quartic_form(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        self.quadratic_form(&y)
    }

    fn quadratic_form(&self, y: &[f64]) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.entries[(i, j)] * y[i] * y[j];
            }
        }
        s
    }
}

impl From<CouplingMatrix> for Vec<Vec<f64>> {
    fn from(b: CouplingMatrix) -> Self {
        b.rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CouplingMatrix {
    type Error = AlgebraError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::from_rows(&rows)
    }
}

/// Maximum of the quartic form on the unit sphere and its maximizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMaxResult {
    pub f_max: f64,
    /// Maximizing unit vectors with nonnegative components (sign flips implied).
    pub maximizers: Vec<Vec<f64>>,
    /// The maximizer set contains a continuum; `maximizers` holds one representative.
    pub degenerate: bool,
}

impl SphereMaxResult {
    pub fn representative(&self) -> &[f64] {
        &self.maximizers[0]
    }

    /// Euclidean distance from `x` (taken modulo sign flips) to the nearest stored maximizer.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.maximizers
            .iter()
            .map(|m| {
                m.iter()
                    .zip(x)
                    .map(|(a, b)| (a - b.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `f_max = max_{|X|=1} sum_ij beta_ij x_i^2 x_j^2`.
///
/// With `y_i = x_i^2` this is the maximum of `y^T B y` over the probability
/// simplex. Every face of the simplex is visited: the stationary point of the
/// quadratic restricted to the face's affine hull is found from the KKT system
/// and kept when it lies in the face. The global maximum is always attained at
/// such a point (a singular face carries a stationary continuum that reaches a
/// lower-dimensional face), so the value is exact up to rounding.
pub fn fmax(b: &CouplingMatrix) -> Result<SphereMaxResult, AlgebraError> {
    let d = b.dim();
    if d > FMAX_MAX_DIM {
        return Err(AlgebraError::InvalidMatrix(format!(
            "dimension {d} exceeds the face-enumeration limit {FMAX_MAX_DIM}"
        )));
    }
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for mask in 1u32..(1u32 << d) {
        let support: Vec<usize> = (0..d).filter(|&i| mask & (1 << i) != 0).collect();
        if let Some(y) = face_stationary_point(b, &support) {
            let value = b.quadratic_form(&y);
            candidates.push((value, y));
        }
    }
    let f_max = candidates
        .iter()
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-10 * f_max.abs().max(1.0);

    let mut best: Vec<Vec<f64>> = Vec::new();
    for (value, y) in &candidates {
        if *value < f_max - tol {
            continue;
        }
        if !best.iter().any(|other| max_abs_diff(other, y) <= CLUSTER_TOL) {
            best.push(y.clone());
        }
    }

    let degenerate = best.iter().enumerate().any(|(a, ya)| {
        best[a + 1..].iter().any(|yb| {
            let mid: Vec<f64> = ya.iter().zip(yb).map(|(p, q)| 0.5 * (p + q)).collect();
            b.quadratic_form(&mid) >= f_max - tol
        })
    });
    if degenerate {
        best.truncate(1);
    }

    let maximizers = best
        .into_iter()
        .map(|y| y.into_iter().map(|v| v.max(0.0).sqrt()).collect())
        .collect();
    Ok(SphereMaxResult {
        f_max,
        maximizers,
        degenerate,
    })
}

fn face_stationary_point(b: &CouplingMatrix, support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    for (a, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            kkt[(a, c)] = b.get(i, j);
        }
        kkt[(a, k)] = -1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;

    let scale = kkt.amax().max(1.0);
    let lu = kkt.clone().lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 * scale.powi(k as i32 + 1) {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    let residual = (&kkt * &sol - &rhs).amax();
    if residual > 1e-9 * scale {
        return None;
    }
    if sol.iter().take(k).any(|&v| v <= 0.0) {
        return None;
    }
    let mut y = vec![0.0; b.dim()];
    for (a, &i) in support.iter().enumerate() {
        y[i] = sol[a];
    }
    Some(y)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// `min_k (M_kk - sum_{h != k} |M_kh|)`, a lower bound on the spectrum of a
/// symmetric matrix.
pub fn gershgorin_lower_bound(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|k| m[(k, k)] - off_diagonal_row_sum(m, k))
        .fold(f64::INFINITY, f64::min)
}

pub fn is_strictly_diagonally_dominant(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|k| m[(k, k)].abs() > off_diagonal_row_sum(m, k))
}

fn off_diagonal_row_sum(m: &DMatrix<f64>, k: usize) -> f64 {
    (0..m.ncols())
        .filter(|&h| h != k)
        .map(|h| m[(k, h)].abs())
        .sum()
}

/// Maximizer of `Phi(t) = 1/2 l.t - 1/4 t^T M t` over `t >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticMax {
    pub t: Vec<f64>,
    pub value: f64,
    /// Largest violation of the KKT conditions at `t`.
    pub kkt_residual: f64,
}

/// Primal active-set method for the concave quadratic `Phi` on the orthant.
///
/// Requires `M` symmetric positive definite.
pub fn maximize_concave_quadratic(
    m: &DMatrix<f64>,
    linear: &[f64],
) -> Result<QuadraticMax, AlgebraError> {
    let n = linear.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(AlgebraError::InvalidMatrix("dimension mismatch".into()));
    }
    if m.clone().cholesky().is_none() {
        return Err(AlgebraError::NotConcave);
    }
    let scale = m.amax().max(linear.iter().fold(0.0f64, |a, v| a.max(v.abs()))).max(1e-300);
    let tol = 1e-13 * scale;

    // Minimize 1/2 t^T Q t - c^T t with Q = M/2, c = l/2.
    let q = m * 0.5;
    let c = DVector::from_iterator(n, linear.iter().map(|v| 0.5 * v));
    let mut t = DVector::<f64>::zeros(n);
    let mut free = vec![false; n];

    for _outer in 0..(4 * n + 8) {
        let w = &c - &q * &t;
        let entering = (0..n)
            .filter(|&k| !free[k] && w[k] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(k) = entering else { break };
        free[k] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| free[k]).collect();
            let z = solve_on(&q, &c, &idx)?;
            if idx.iter().all(|&k| z[k] > 0.0) {
                t = z;
                break;
            }
            // Step toward z until the first free coordinate hits zero.
            let mut alpha = 1.0f64;
            for &k in &idx {
                if z[k] <= 0.0 {
                    let denom = t[k] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(t[k] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            t = &t + (&z - &t) * alpha;
            for &k in &idx {
                if t[k] <= tol {
                    t[k] = 0.0;
                    free[k] = false;
                }
            }
            if idx.iter().all(|&k| !free[k]) {
                break;
            }
        }
    }

    let grad = &c - &q * &t;
    let mut kkt_residual = 0.0f64;
    for k in 0..n {
        let r = if t[k] > 0.0 { grad[k].abs() } else { grad[k].max(0.0) };
        kkt_residual = kkt_residual.max(r);
    }
    let t: Vec<f64> = t.iter().copied().collect();
    let value = concave_quadratic_value(m, linear, &t);
    Ok(QuadraticMax {
        t,
        value,
        kkt_residual,
    })
}

pub fn concave_quadratic_value(m: &DMatrix<f64>, linear: &[f64], t: &[f64]) -> f64 {
    let n = t.len();
    let mut v = 0.0;
    for a in 0..n {
        v += 0.5 * linear[a] * t[a];
        for b in 0..n {
            v -= 0.25 * m[(a, b)] * t[a] * t[b];
        }
    }
    v
}

fn solve_on(q: &DMatrix<f64>, c: &DVector<f64>, idx: &[usize]) -> Result<DVector<f64>, AlgebraError> {
    let n = c.len();
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |a, b| q[(idx[a], idx[b])]);
    let rhs = DVector::from_fn(k, |a, _| c[idx[a]]);
    let sol = sub
        .cholesky()
        .ok_or(AlgebraError::NotConcave)?
        .solve(&rhs);
    let mut z = DVector::<f64>::zeros(n);
    for (a, &i) in idx.iter().enumerate() {
        z[i] = sol[a];
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm(rows: &[&[f64]]) -> CouplingMatrix {
        CouplingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn decomposition_examples() {
        let a = GroupDecomposition::new(vec![0, 1, 2], 2).unwrap();
        assert_eq!(a.m(), 2);
        assert_eq!(a.group(0), 0..1);
        assert_eq!(a.group(1), 1..2);
        assert!(a.same_group_pairs().is_empty());
        assert_eq!(a.cross_group_pairs(), vec![(0, 1), (1, 0)]);

        let b = GroupDecomposition::new(vec![0, 2], 2).unwrap();
        assert_eq!(b.m(), 1);
        assert_eq!(b.same_group_pairs(), vec![(0, 1), (1, 0)]);
        assert!(b.cross_group_pairs().is_empty());

        let c = GroupDecomposition::new(vec![0, 2, 3], 3).unwrap();
        assert_eq!(c.group(0), 0..2);
        assert_eq!(c.group(1), 2..3);
        assert_eq!(c.classify_pair(0, 1).unwrap(), PairClass::SameGroup);
        assert_eq!(c.classify_pair(1, 2).unwrap(), PairClass::CrossGroup);
        assert_eq!(c.classify_pair(2, 2).unwrap(), PairClass::Diagonal);
        assert!(matches!(
            c.classify_pair(3, 0),
            Err(AlgebraError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn decomposition_errors() {
        assert_eq!(GroupDecomposition::new(vec![1, 2], 2), Err(AlgebraError::FirstNotZero));
        assert_eq!(GroupDecomposition::new(vec![], 2), Err(AlgebraError::FirstNotZero));
        assert!(matches!(
            GroupDecomposition::new(vec![0, 2, 2], 2),
            Err(AlgebraError::NotStrictlyIncreasing { position: 2 })
        ));
        assert!(matches!(
            GroupDecomposition::new(vec![0, 1], 2),
            Err(AlgebraError::LastNotD { d: 2, last: 1 })
        ));
        assert!(matches!(
            GroupDecomposition::new(vec![0], 0),
            Err(AlgebraError::LastNotD { .. })
        ));
    }

    #[test]
    fn pair_classes_partition_off_diagonal() {
        let a = GroupDecomposition::new(vec![0, 2, 3, 6], 6).unwrap();
        let k1 = a.same_group_pairs();
        let k2 = a.cross_group_pairs();
        assert_eq!(k1.len() + k2.len(), 6 * 5);
        assert!(k1.iter().all(|p| !k2.contains(p)));
    }

    #[test]
    fn coupling_validation() {
        assert!(CouplingMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).is_err());
        assert!(CouplingMatrix::from_rows(&[vec![0.0]]).is_err());
        assert!(CouplingMatrix::from_rows(&[vec![1.0, 0.0]]).is_err());
        assert!(CouplingMatrix::from_rows(&[vec![1.0, -3.0], vec![-3.0, 2.0]]).is_ok());
    }

    #[test]
    fn fmax_examples() {
        let r = fmax(&cm(&[&[2.0]])).unwrap();
        assert_eq!(r.f_max, 2.0);
        assert_eq!(r.maximizers, vec![vec![1.0]]);

        let r = fmax(&cm(&[&[1.0, 0.0], &[0.0, 2.0]])).unwrap();
        assert_eq!(r.f_max, 2.0);
        assert_eq!(r.maximizers, vec![vec![0.0, 1.0]]);
    }

    fn two_by_two_oracle(beta: f64) -> f64 {
        // max over s in [0,1] of s^2 + (1-s)^2 + 2 beta s (1-s), step 1e-3
        (0..=1000)
            .map(|k| {
                let s = k as f64 * 1e-3;
                s * s + (1.0 - s) * (1.0 - s) + 2.0 * beta * s * (1.0 - s)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn fmax_two_by_two_closed_form() {
        for &beta in &[-2.0, 0.0, 0.5, 1.5, 3.0] {
            let r = fmax(&cm(&[&[1.0, beta], &[beta, 1.0]])).unwrap();
            let closed = if beta <= 1.0 { 1.0 } else { 0.5 * (1.0 + beta) };
            assert!((r.f_max - closed).abs() < 1e-12, "beta={beta}");
            assert!((r.f_max - two_by_two_oracle(beta)).abs() < 1e-6);
            if beta > 1.0 {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                assert_eq!(r.maximizers.len(), 1);
                assert!((r.maximizers[0][0] - h).abs() < 1e-12);
                assert!((r.maximizers[0][1] - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fmax_reports_both_vertices_and_degenerate_sets() {
        let r = fmax(&cm(&[&[1.0, 0.2], &[0.2, 1.0]])).unwrap();
        assert_eq!(r.f_max, 1.0);
        assert_eq!(r.maximizers.len(), 2);
        assert!(!r.degenerate);

        // beta = 1: f = (x1^2 + x2^2)^2 = 1 on the whole sphere.
        let r = fmax(&cm(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert!((r.f_max - 1.0).abs() < 1e-12);
        assert!(r.degenerate);
        assert_eq!(r.maximizers.len(), 1);
    }

    #[test]
    fn gershgorin_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        assert_eq!(gershgorin_lower_bound(&m), 2.0);
        let kmin = (7.0 - 5f64.sqrt()) / 2.0;
        let eig = m.clone().symmetric_eigen().eigenvalues.min();
        assert!((eig - kmin).abs() < 1e-12);
        assert!(gershgorin_lower_bound(&m) <= kmin);
        assert!(is_strictly_diagonally_dominant(&m));

        assert_eq!(gershgorin_lower_bound(&DMatrix::identity(3, 3)), 1.0);

        let n = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(gershgorin_lower_bound(&n), -1.0);
        assert!(!is_strictly_diagonally_dominant(&n));

        assert!(is_strictly_diagonally_dominant(&DMatrix::from_element(1, 1, 0.5)));
    }

    #[test]
    fn concave_quadratic_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        let r = maximize_concave_quadratic(&id, &[1.0, 1.0]).unwrap();
        assert!((r.t[0] - 1.0).abs() < 1e-14 && (r.t[1] - 1.0).abs() < 1e-14);
        assert!((r.value - 0.5).abs() < 1e-14);

        let r = maximize_concave_quadratic(&id, &[1.0, -1.0]).unwrap();
        assert!((r.t[0] - 1.0).abs() < 1e-14);
        assert_eq!(r.t[1], 0.0);
        assert!((r.value - 0.25).abs() < 1e-14);

        let n = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(maximize_concave_quadratic(&n, &[1.0, 1.0]), Err(AlgebraError::NotConcave));
    }

    fn random_spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    proptest! {
        #[test]
        fn fmax_scaling_and_sign_symmetry(
            b12 in -2.0f64..3.0, b13 in -2.0f64..3.0, b23 in -2.0f64..3.0,
            x in prop::collection::vec(-2.0f64..2.0, 3), t in 0.1f64..3.0,
        ) {
            let b = cm(&[&[1.0, b12, b13], &[b12, 2.0, b23], &[b13, b23, 0.7]]);
            let fx = b.quartic_form(&x);
            let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
            prop_assert!((b.quartic_form(&tx) - t.powi(4) * fx).abs() <= 1e-9 * (1.0 + fx.abs() * t.powi(4)));
            let flipped = vec![-x[0], x[1], -x[2]];
            prop_assert_eq!(b.quartic_form(&flipped), fx);

            let r = fmax(&b).unwrap();
            prop_assert!(r.f_max >= 2.0 - 1e-12);
            for m in &r.maximizers {
                let norm: f64 = m.iter().map(|v| v * v).sum();
                prop_assert!((norm - 1.0).abs() < 1e-9);
                prop_assert!((b.quartic_form(m) - r.f_max).abs() < 1e-9);
            }
            // Any unit vector stays below f_max.
            let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-3 {
                let u: Vec<f64> = x.iter().map(|v| v / n).collect();
                prop_assert!(b.quartic_form(&u) <= r.f_max + 1e-9);
            }
        }

        #[test]
        fn gershgorin_below_spectrum(vals in prop::collection::vec(-3.0f64..3.0, 16)) {
            let a = DMatrix::from_fn(4, 4, |i, j| vals[i * 4 + j]);
            let s = (&a + a.transpose()) * 0.5;
            let min_eig = s.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(gershgorin_lower_bound(&s) <= min_eig + 1e-12);
            let diag_pos = (0..4).all(|k| s[(k, k)] > 0.0);
            if is_strictly_diagonally_dominant(&s) && diag_pos {
                prop_assert!(min_eig > 0.0);
            }
        }

        #[test]
        fn active_set_matches_kkt(vals in prop::collection::vec(-1.0f64..1.0, 9), l in prop::collection::vec(-2.0f64..2.0, 3)) {
            let m = random_spd(3, &vals);
            let r = maximize_concave_quadratic(&m, &l).unwrap();
            prop_assert!(r.kkt_residual <= 1e-10);
            prop_assert!(r.t.iter().all(|&v| v >= 0.0));
            // Dense grid search never beats the active-set value.
            let hi = r.t.iter().fold(1.0f64, |a, &v| a.max(v)) * 2.0;
            let steps = 24;
            for i in 0..=steps { for j in 0..=steps { for k in 0..=steps {
                let t = [hi * i as f64 / steps as f64, hi * j as f64 / steps as f64, hi * k as f64 / steps as f64];
                prop_assert!(concave_quadratic_value(&m, &l, &t) <= r.value + 1e-10);
            }}}
        }
    }
}
