//! Quadrature rules shared by the exact engine and the free-limit solver.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Affine map of the rule onto `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> Rule {
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        Rule {
            nodes: self.nodes.iter().map(|t| c + r * t).collect(),
            weights: self.weights.iter().map(|w| r * w).collect(),
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn compute_gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    if n == 1 {
        return Rule {
            nodes: vec![0.0],
            weights: vec![2.0],
        };
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton.
        let theta = PI * (i as f64 + 0.75) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d.is_finite() { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Gauss–Legendre rule with `n` nodes, ascending. Rules are cached per `n`.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache
        .lock()
        .unwrap()
        .entry(n)
        .or_insert_with(|| Arc::clone(&rule))
        .clone()
}

/// Angles `θ_k = kπ/(n+1)`, `k = 1..=n`, of the second-kind Chebyshev roots, in
/// order of increasing node `cos θ_k`.
pub fn chebyshev_u_angles(n: usize) -> Vec<f64> {
    (1..=n)
        .rev()
        .map(|k| k as f64 * PI / (n as f64 + 1.0))
        .collect()
}

/// Angles `θ_k = (2k+1)π/(2n)` of the first-kind Chebyshev roots.
pub fn chebyshev_t_angles(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (2 * k + 1) as f64 * PI / (2.0 * n as f64))
        .collect()
}

/// Chebyshev coefficients `c_k` with `f(t) = Σ c_k T_k(t)` on `[-1, 1]`, exact
/// for polynomials of degree below `n`.
pub fn chebyshev_coefficients(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let angles = chebyshev_t_angles(n);
    let values: Vec<f64> = angles.iter().map(|a| f(a.cos())).collect();
    (0..n)
        .map(|k| {
            let s: f64 = angles
                .iter()
                .zip(&values)
                .map(|(a, v)| v * (k as f64 * a).cos())
                .sum();
            if k == 0 {
                s / n as f64
            } else {
                2.0 * s / n as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 101] {
            let rule = gauss_legendre(n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n = {n}");
            let deg = 2 * n - 2;
            let moment = rule.integrate(|x| x.powi(deg as i32));
            let exact = 2.0 / (deg as f64 + 1.0);
            assert!((moment - exact).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn large_rule_is_sorted_and_accurate() {
        let rule = gauss_legendre(4096);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        let gauss = rule.mapped(-12.0, 12.0).integrate(|x| (-x * x).exp());
        assert!((gauss - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn chebyshev_coefficients_of_cubic() {
        // t^3 = (3 T_1 + T_3) / 4
        let c = chebyshev_coefficients(|t| t * t * t, 8);
        assert!((c[1] - 0.75).abs() < 1e-14);
        assert!((c[3] - 0.25).abs() < 1e-14);
        assert!(c[0].abs() < 1e-14 && c[2].abs() < 1e-14);
    }
}
