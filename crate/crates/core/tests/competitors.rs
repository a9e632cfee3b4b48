use std::f64::consts::PI;

use nehari_core::algebra::{CouplingMatrix, GroupDecomposition};
use nehari_core::bubbles::{bubble_profile, S_TILDE_SQ_EXACT};
use nehari_core::discretization::RadialGrid;
use nehari_core::estimates::*;
use nehari_core::functional::{energy_j, ProblemSpec, SystemState};
use nehari_core::nehari::MinimizeOptions;

fn spec(n: usize, lambdas: Vec<f64>, beta: Vec<Vec<f64>>, breaks: Vec<usize>) -> ProblemSpec {
    let d = lambdas.len();
    ProblemSpec::new(
        RadialGrid::uniform(1.0, n).unwrap(),
        lambdas,
        CouplingMatrix::from_rows(&beta).unwrap(),
        GroupDecomposition::new(breaks, d).unwrap(),
    )
    .unwrap()
}

fn scalar(n: usize, lambda: f64) -> ProblemSpec {
    spec(n, vec![lambda], vec![vec![1.0]], vec![0, 1])
}

/// Least-squares slope and intercept of `y` against `x`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    (sxy / sxx, my - sxy / sxx * mx)
}

#[test]
fn quadratic_coefficient_a_approaches_four_l_at_log_rate() {
    let s = scalar(64, -7.0);
    let l = S_TILDE_SQ_EXACT / 4.0;
    let c_h = delta_coefficients(&s).unwrap()[0];
    assert_eq!(c_h, 56.0);
    let rho = 0.5;
    let mut logs = Vec::new();
    let mut scaled = Vec::new();
    for k in 4..=10 {
        let eps = rho * 2f64.powi(-k);
        let v = build_cutoff_bubble(&s, 0, eps, [0.0; 4], rho).unwrap();
        assert!(v.a < 4.0 * l);
        logs.push(eps.ln().abs());
        scaled.push((4.0 * l - v.a) / (eps * eps));
    }
    // (4l - A)/ε² = slope·|ln ε| + O(1); the slope carries the sphere area 2π²
    // on top of C^h because the mass of U_ε grows like 16π² ε² |ln ε|.
    let (slope, _) = linear_fit(&logs, &scaled);
    let expected = 2.0 * PI * PI * c_h;
    assert!((slope / expected - 1.0).abs() < 0.2, "slope {slope} vs {expected}");
    // The log-rate lower bound C^h ε²|ln ε| holds throughout.
    for (lg, sc) in logs.iter().zip(&scaled) {
        assert!(*sc >= c_h * lg);
    }
}

#[test]
fn quartic_coefficient_error_is_fourth_order() {
    let s = scalar(64, -7.0);
    let l = S_TILDE_SQ_EXACT / 4.0;
    let rho = 0.5;
    let errs: Vec<f64> = (2..=6)
        .map(|k| {
            let eps = rho * 2f64.powi(-k);
            let v = build_cutoff_bubble(&s, 0, eps, [0.0; 4], rho).unwrap();
            assert!(v.b < 4.0 * l);
            (4.0 * l - v.b, eps)
        })
        .map(|(e, eps)| e / eps.powi(4))
        .collect();
    for w in errs.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.1, "{errs:?}");
    }
}

#[test]
fn without_lambda_a_minus_b_vanishes_faster_than_log_rate() {
    let block = CouplingMatrix::from_rows(&[vec![1.0]]).unwrap();
    let rho = 0.5;
    let ratios: Vec<f64> = (2..=10)
        .map(|k| {
            let eps = rho * 2f64.powi(-k);
            let (_, _, a, b) = cutoff_bubble_coefficients(&block, &[0.0], eps, rho).unwrap();
            (a - b).abs() / (eps * eps * eps.ln().abs())
        })
        .collect();
    for w in ratios.windows(2) {
        assert!(w[1] < w[0], "{ratios:?}");
    }
    assert!(ratios.last().unwrap() < &(0.5 * ratios[0]));
}

#[test]
fn disjoint_competitor_matches_direct_maximization() {
    let s = spec(64, vec![-7.0, -5.0], vec![vec![1.0, -1.0], vec![-1.0, 2.0]], vec![0, 1, 2]);
    let table = nehari_core::bubbles::level_table(s.coupling(), s.decomp()).unwrap();
    let c_h = delta_coefficients(&s).unwrap();
    let (centers, rho) = default_centers(2, 1.0);
    let rep = competitor_disjoint(&s, &[0, 1], rho / 64.0, &centers, rho, &table.l_h, &c_h).unwrap();
    assert!(rep.cross_gram_zero);
    let phi = |t: &[f64; 2]| (0..2).map(|h| 0.5 * t[h] * rep.a_h[h] - 0.25 * t[h] * t[h] * rep.b_h[h]).sum::<f64>();
    // Coarse grid, then a fine grid around the coarse optimum.
    let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
    for i in 0..=200 {
        for j in 0..=200 {
            let t = [i as f64 * 0.01, j as f64 * 0.01];
            if phi(&t) > best.1 {
                best = (t, phi(&t));
            }
        }
    }
    let c = best.0;
    for i in -100..=100 {
        for j in -100..=100 {
            let t = [c[0] + i as f64 * 1e-4, c[1] + j as f64 * 1e-4];
            if phi(&t) > best.1 {
                best = (t, phi(&t));
            }
        }
    }
    assert!((best.1 - rep.upper_bound).abs() < 1e-6, "{} vs {}", best.1, rep.upper_bound);
    assert!(rep.upper_bound < table.l_total);
}

#[test]
fn centered_competitor_agrees_with_grid_energy() {
    let s = scalar(8193, -7.0);
    let (eps, rho) = (0.125, 0.5);
    let v = build_cutoff_bubble(&s, 0, eps, [0.0; 4], rho).unwrap();
    let (bound, t) = disjoint_upper_bound(&[v.a], &[v.b]);
    let field = s.grid().sample(|r| cutoff(r, rho) * bubble_profile(eps, r));
    let energy = |tt: f64| {
        let u = SystemState::new(vec![field.iter().map(|x| tt.sqrt() * x).collect()]);
        energy_j(&s, &u, &[0]).unwrap()
    };
    let grid_max = (0..=400)
        .map(|k| t[0] * (0.98 + 1e-4 * k as f64))
        .map(energy)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(((grid_max - bound) / bound).abs() < 1e-5, "{grid_max} vs {bound}");
}

#[test]
fn geometry_is_validated() {
    let s = scalar(64, -7.0);
    assert!(matches!(
        build_cutoff_bubble(&s, 0, 0.01, [0.6, 0.0, 0.0, 0.0], 0.25),
        Err(EstimatesError::GeometryViolated(_))
    ));
    assert!(matches!(
        build_cutoff_bubble(&s, 0, 0.3, [0.0; 4], 0.25),
        Err(EstimatesError::GeometryViolated(_))
    ));
    let two = spec(64, vec![-7.0, -7.0], vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0, 1, 2]);
    let c = [[0.3, 0.0, 0.0, 0.0], [-0.1, 0.0, 0.0, 0.0]];
    assert!(matches!(
        competitor_disjoint(&two, &[0, 1], 0.01, &c, 0.2, &[1.0, 1.0], &[1.0, 1.0]),
        Err(EstimatesError::GeometryViolated(_))
    ));
}

#[test]
fn single_equation_sweep_verifies_and_the_level_is_below() {
    let s = scalar(513, -7.0);
    let opts = VerifyOptions {
        minimize: Some(MinimizeOptions {
            restarts: 2,
            ..Default::default()
        }),
        ..Default::default()
    };
    let rep = verify_energy_estimates(&s, &opts).unwrap();
    let l = S_TILDE_SQ_EXACT / 4.0;
    assert!(rep.eps_star > 0.0);
    assert!(rep.levels[0].converged);
    assert!(rep.levels[0].level < l - rep.delta_star);
    assert!(rep.levels[0].below_disjoint_bound);
    // ε* is the largest verified value of the sweep.
    let first_ok = rep.sweep.iter().position(|r| r.all_satisfied).unwrap();
    assert_eq!(rep.sweep[first_ok].eps, rep.eps_star);
}

#[test]
fn delta_star_shrinks_with_lambda() {
    let deltas: Vec<f64> = [-7.0, -3.0, -1.0]
        .iter()
        .map(|&l| verify_energy_estimates(&scalar(64, l), &VerifyOptions::default()).unwrap().delta_star)
        .collect();
    assert!(deltas[0] > deltas[1] && deltas[1] > deltas[2], "{deltas:?}");
}

#[test]
fn negative_same_group_coupling_is_rejected_first() {
    let s = spec(64, vec![-7.0, -7.0], vec![vec![1.0, -0.5], vec![-0.5, 1.0]], vec![0, 2]);
    assert!(matches!(
        verify_energy_estimates(&s, &VerifyOptions::default()),
        Err(EstimatesError::HypothesisViolated(_))
    ));
    assert!(matches!(
        compute_thresholds(&s, &ThresholdOptions::default()),
        Err(EstimatesError::HypothesisViolated(_))
    ));
}

fn synthetic_thresholds() -> ThresholdSet {
    ThresholdSet::derive(ThresholdInputs {
        s: 7.6,
        s_tilde_sq: S_TILDE_SQ_EXACT,
        l_h: vec![S_TILDE_SQ_EXACT / 4.0; 2],
        c_h: vec![56.0; 2],
        inv_beta_factor: 1.0,
        eps_star: 0.0625,
    })
}

#[test]
fn hypothesis_margins() {
    let t = synthetic_thresholds();
    let lam = t.lambda;
    let s = spec(64, vec![-7.0, -7.0], vec![vec![1.0, lam / 2.0], vec![lam / 2.0, 1.0]], vec![0, 1, 2]);
    let rep = check_hypotheses(&s, &t, Hypothesis::MixedCoupling);
    assert!(rep.passed);
    let cross = rep.clauses.iter().find(|c| c.name.contains("across")).unwrap();
    assert!((cross.margin - lam / 2.0).abs() < 1e-15);
    let rep = check_hypotheses(&s, &t, Hypothesis::SingletonGroups);
    assert!(rep.passed);

    // Group coupling equal to the largest diagonal entry fails the strict clause.
    let b = lam / 2.0;
    let s = spec(
        64,
        vec![-7.0; 3],
        vec![vec![1.0, 1.0, b], vec![1.0, 1.0, b], vec![b, b, 1.0]],
        vec![0, 2, 3],
    );
    assert!(!check_hypotheses(&s, &t, Hypothesis::UniformBlocks).passed);
    let s = spec(
        64,
        vec![-7.0; 3],
        vec![vec![1.0, 1.5, b], vec![1.5, 1.0, b], vec![b, b, 1.0]],
        vec![0, 2, 3],
    );
    assert!(check_hypotheses(&s, &t, Hypothesis::UniformBlocks).passed);

    // |β| = Λ/36 with α = 2 and d = 3 sits inside the non-strict bound Λ/18.
    let b = -lam / 36.0;
    let s = spec(
        64,
        vec![-7.0; 3],
        vec![vec![1.0, 3.0, b], vec![3.0, 1.0, b], vec![b, b, 1.0]],
        vec![0, 2, 3],
    );
    let rep = check_hypotheses(&s, &t, Hypothesis::WeakCrossCoupling { alpha: 2.0 });
    assert!(rep.passed, "{rep:?}");
    // Exactly on the bound still passes.
    let b = -lam / 18.0;
    let s = spec(
        64,
        vec![-7.0; 3],
        vec![vec![1.0, 3.0, b], vec![3.0, 1.0, b], vec![b, b, 1.0]],
        vec![0, 2, 3],
    );
    assert!(check_hypotheses(&s, &t, Hypothesis::WeakCrossCoupling { alpha: 2.0 }).passed);
    let s = spec(
        64,
        vec![-7.0, -6.0, -7.0],
        vec![vec![1.0, 3.0, b], vec![3.0, 1.0, b], vec![b, b, 1.0]],
        vec![0, 2, 3],
    );
    assert!(!check_hypotheses(&s, &t, Hypothesis::WeakCrossCoupling { alpha: 2.0 }).passed);
}

#[test]
fn limit_splitting_clauses() {
    let t = synthetic_thresholds();
    let s = spec(64, vec![-7.0, -7.0], vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0, 1, 2]);
    assert!(check_hypotheses(&s, &t, Hypothesis::LimitSplitting).passed);
    let s = spec(64, vec![-7.0, -7.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1, 2]);
    assert!(!check_hypotheses(&s, &t, Hypothesis::LimitSplitting).passed);
    let s = spec(64, vec![-7.0, -7.0], vec![vec![1.0, 0.5], vec![0.5, 1.0]], vec![0, 1, 2]);
    assert!(!check_hypotheses(&s, &t, Hypothesis::LimitSplitting).passed);
}

#[test]
fn threshold_set_recomputes_bit_identically() {
    let s = spec(257, vec![-7.0, -7.0], vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0, 1, 2]);
    let t = compute_thresholds(&s, &ThresholdOptions::default()).unwrap();
    assert_eq!(ThresholdSet::derive(t.inputs.clone()), t);
    assert!((t.c_bar / (S_TILDE_SQ_EXACT / 2.0) - 1.0).abs() < 1e-12);
    assert!((t.lambda1 / (t.s * t.s / (16.0 * S_TILDE_SQ_EXACT)) - 1.0).abs() < 1e-12);
    assert_eq!(t.lambda, t.lambda1.min(t.lambda2).min(t.lambda4));
    assert_eq!(t.delta_star, t.delta(t.eps_star));
    assert!(t.s < S_TILDE_SQ_EXACT.sqrt());
}
