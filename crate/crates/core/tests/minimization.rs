use nehari_core::algebra::{CouplingMatrix, GroupDecomposition};
use nehari_core::bubbles::{level_table, S_TILDE_SQ_EXACT};
use nehari_core::discretization::RadialGrid;
use nehari_core::estimates::{delta_coefficients, mixed_sweep, MIXED_RHO_FRACTIONS};
use nehari_core::functional::ProblemSpec;
use nehari_core::nehari::{classify_minimizer, minimize, MinimizeOptions};

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

fn opts(restarts: usize) -> MinimizeOptions {
    MinimizeOptions {
        restarts,
        ..Default::default()
    }
}

#[test]
fn scalar_ground_state_is_positive_decreasing_and_below_the_bubble_level() {
    let s = spec(513, vec![-7.0], vec![vec![1.0]], vec![0, 1]);
    let r = minimize(&s, &[0], &opts(3)).unwrap();
    let l = S_TILDE_SQ_EXACT / 4.0;
    assert!(r.converged);
    assert!(r.level > 0.0 && r.level < 0.99 * l);
    assert!(r.nehari_residuals[0].abs() <= 1e-8 * r.group_l4_mass[0].powi(2));
    let u = r.state.component(0);
    assert!(u[..u.len() - 1].iter().all(|&v| v > 0.0));
    assert!(u.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.restart_dispersion() < 1e-8 * r.level);
}

#[test]
fn cooperative_pair_is_synchronized() {
    let s = spec(513, vec![-7.0, -7.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]], vec![0, 2]);
    let r = minimize(&s, &[0], &opts(3)).unwrap();
    let c = classify_minimizer(&s, &r).unwrap();
    let x = &c.groups[0].direction;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((x[0] - h).abs() < 1e-2 && (x[1] - h).abs() < 1e-2, "{x:?}");
    let scalar = minimize(&spec(513, vec![-7.0], vec![vec![1.5]], vec![0, 1]), &[0], &opts(3)).unwrap();
    assert!(((r.level - scalar.level) / scalar.level).abs() < 1e-3);
}

#[test]
fn group_quartic_mass_stays_bounded_below_along_the_flow() {
    let s = spec(257, vec![-7.0, -5.0], vec![vec![1.0, -0.5], vec![-0.5, 1.0]], vec![0, 1, 2]);
    let r = minimize(
        &s,
        &[0, 1],
        &MinimizeOptions {
            restarts: 2,
            max_iter: 400,
            require_convergence: false,
            ..Default::default()
        },
    )
    .unwrap();
    // With competition across groups, S|u|₄² ≤ ‖u‖² ≤ β|u|₄⁴ on the Nehari set,
    // so each group's |u|₄² stays above S/β = S along the flow.
    let (lo, hi) = r.l4_mass_range;
    assert!(lo > 0.0 && lo <= hi);
    let sob = nehari_core::discretization::sobolev_s(s.grid(), s.lambdas(), Default::default()).unwrap();
    assert!(lo >= sob * (1.0 - 1e-6), "{lo} vs {sob}");
}

#[test]
fn competitive_levels_are_consistent_with_mixed_competitors() {
    let s = spec(513, vec![-7.0, -7.0], vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0, 1, 2]);
    let table = level_table(s.coupling(), s.decomp()).unwrap();
    let c_h = delta_coefficients(&s).unwrap();
    let c1 = minimize(&s, &[0], &opts(2)).unwrap();
    let c2 = minimize(&s, &[1], &opts(2)).unwrap();
    assert!(c1.converged && c2.converged);
    assert!(((c1.level - c2.level) / c1.level).abs() < 1e-10);
    let rhos: Vec<f64> = MIXED_RHO_FRACTIONS.to_vec();
    for attained in [&c1, &c2] {
        let m = mixed_sweep(&s, attained, &rhos, &table.l_h, &c_h).unwrap();
        assert!(m.gershgorin_bound > 0.0);
        assert!(m.all_t_positive);
        assert!(m.kkt_residual < 1e-10);
        assert!(m.report.satisfied, "{:?}", m.report);
        // The competitor contains a scaled copy of the attained state.
        assert!(m.report.upper_bound >= c1.level + c2.level);
    }
}
