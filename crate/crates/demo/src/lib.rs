//! Browser bindings: a 2x2 coupling explorer, bubble profiles and a scalar solve.

use wasm_bindgen::prelude::*;

use nehari_core::algebra::{fmax, CouplingMatrix, GroupDecomposition};
use nehari_core::bubbles::{bubble_overlap, bubble_profile, subsystem_level};
use nehari_core::discretization::RadialGrid;
use nehari_core::functional::ProblemSpec;
use nehari_core::nehari::{minimize, MinimizeOptions};

/// `[f_max, x1, x2, l]` for the symmetric matrix `[[b11, b12], [b12, b22]]`,
/// or an empty vector when the matrix is rejected.
#[wasm_bindgen]
pub fn explore_coupling(b11: f64, b12: f64, b22: f64) -> Vec<f64> {
    let Ok(b) = CouplingMatrix::from_rows(&[vec![b11, b12], vec![b12, b22]]) else {
        return Vec::new();
    };
    let (Ok(r), Ok(l)) = (fmax(&b), subsystem_level(&b)) else {
        return Vec::new();
    };
    let x = r.representative();
    vec![r.f_max, x[0], x[1], l]
}

/// Samples of `U_ε(r)` on `[0, r_max]`.
#[wasm_bindgen]
pub fn bubble_samples(eps: f64, r_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| bubble_profile(eps, r_max * k as f64 / (n - 1) as f64)).collect()
}

/// `∫U_{ε₁,0}² U_{ε₂,y}²` with `|y| = separation`; NaN when quadrature fails.
#[wasm_bindgen]
pub fn overlap(eps1: f64, eps2: f64, separation: f64) -> f64 {
    bubble_overlap(eps1, eps2, separation).unwrap_or(f64::NAN)
}

/// Ground state of `-Δu + λu = βu³` on the unit ball; returns the level
/// followed by the nodal values, or an empty vector on failure.
#[wasm_bindgen]
pub fn solve_scalar(lambda: f64, beta: f64, n: usize) -> Vec<f64> {
    let solve = || -> Option<Vec<f64>> {
        let grid = RadialGrid::uniform(1.0, n).ok()?;
        let coupling = CouplingMatrix::from_rows(&[vec![beta]]).ok()?;
        let decomp = GroupDecomposition::single_group(1);
        let spec = ProblemSpec::new(grid, vec![lambda], coupling, decomp).ok()?;
        let opts = MinimizeOptions {
            restarts: 1,
            threads: Some(1),
            require_convergence: false,
            ..Default::default()
        };
        let r = minimize(&spec, &[0], &opts).ok()?;
        let mut out = vec![r.level];
        out.extend_from_slice(r.state.component(0));
        Some(out)
    };
    solve().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_explorer() {
        let v = explore_coupling(1.0, 2.0, 1.0);
        assert!((v[0] - 1.5).abs() < 1e-12);
        assert!((v[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(explore_coupling(1.0, f64::NAN, 1.0).is_empty());
    }

    #[test]
    fn scalar_solve() {
        let v = solve_scalar(-7.0, 1.0, 257);
        assert_eq!(v.len(), 258);
        assert!(v[0] > 14.0 && v[0] < 15.0);
        assert!(solve_scalar(-30.0, 1.0, 257).is_empty());
    }

    #[test]
    fn bubbles() {
        let s = bubble_samples(1.0, 4.0, 5);
        assert!((s[0] - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(overlap(1.0, 1.0, 4.0) > overlap(1.0, 1.0, 8.0));
    }
}
