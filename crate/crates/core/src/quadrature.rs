//! Gauss–Legendre rules and composite integration on graded panels.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for k in 0..half {
            let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// `∫_a^b f` with this rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Shared 20-point rule used for whole-space integrals.
pub fn gl20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

/// Breakpoints `a = p_0 < ... < p_k = b` that are geometrically graded away
/// from `focus` with smallest panel about `scale`.
pub fn graded_breaks(a: f64, b: f64, focus: f64, scale: f64, ratio: f64) -> Vec<f64> {
    let mut pts = vec![a, b];
    let focus = focus.clamp(a, b);
    if focus > a && focus < b {
        pts.push(focus);
    }
    let scale = scale.max((b - a) * 1e-14);
    let mut s = scale;
    while focus + s < b {
        pts.push(focus + s);
        s *= ratio;
    }
    let mut s = scale;
    while focus - s > a {
        pts.push(focus - s);
        s *= ratio;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-300);
    pts
}

/// Composite integral over consecutive panels given by `breaks`.
pub fn composite<F: Fn(f64) -> f64>(rule: &GaussLegendre, breaks: &[f64], f: F) -> f64 {
    breaks
        .windows(2)
        .map(|w| rule.integrate(w[0], w[1], &f))
        .sum()
}
