//! Real polynomials and principal-value Stieltjes transforms of gridded densities.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Largest degree accepted for potentials and perturbations.
pub const MAX_DEGREE: usize = 32;

/// Default number of Chebyshev nodes used to discretize one-cut densities.
pub const DEFAULT_GRID_NODES: usize = 2048;

/// A real polynomial stored by ascending coefficients, `coeffs[k]` multiplying `x^k`.
///
/// Trailing zero coefficients are trimmed on construction, so the zero
/// polynomial has an empty coefficient list.
#[derive(Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial{:?}", self.coeffs)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            let a = c.abs();
            match k {
                0 => write!(f, "{a}")?,
                1 => write!(f, "{a}x")?,
                _ => write!(f, "{a}x^{k}")?,
            }
        }
        Ok(())
    }
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `c · x^k`
    pub fn monomial(k: usize, c: f64) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Polynomial::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading_coefficient(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn check_degree(&self) -> Result<()> {
        if self.degree() > MAX_DEGREE {
            return Err(Error::InvalidModel(format!(
                "polynomial degree {} exceeds the cap {MAX_DEGREE}",
                self.degree()
            )));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel(
                "polynomial has non-finite coefficients".into(),
            ));
        }
        Ok(())
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Polynomial {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(0.0);
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c / (k as f64 + 1.0)),
        );
        Polynomial::new(coeffs)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Even degree of at least two with a positive leading coefficient, so that
    /// `e^{-n p}` is integrable over the whole line.
    pub fn is_confining(&self) -> bool {
        let d = self.degree();
        !self.is_zero() && d >= 2 && d % 2 == 0 && self.leading_coefficient() > 0.0
    }

    /// `x ↦ p(shift + scale · x)`
    pub fn compose_affine(&self, shift: f64, scale: f64) -> Polynomial {
        let lin = Polynomial::new(vec![shift, scale]);
        let mut out = Polynomial::zero();
        for &c in self.coeffs.iter().rev() {
            out = &(&out * &lin) + &Polynomial::constant(c);
        }
        out
    }

    /// `x ↦ p(x - c)`
    pub fn translate(&self, c: f64) -> Polynomial {
        self.compose_affine(-c, 1.0)
    }

    /// Conservative check that `p'' ≥ 0` everywhere.
    pub fn is_convex(&self) -> bool {
        let second = self.derivative().derivative();
        if second.is_zero() {
            return true;
        }
        if second.degree() == 0 {
            return second.coeffs[0] >= 0.0;
        }
        if second.degree() % 2 == 1 || second.leading_coefficient() < 0.0 {
            return false;
        }
        // Every root of p'' lies within the Cauchy bound.
        let lead = second.leading_coefficient();
        let bound = 1.0
            + second.coeffs[..second.degree()]
                .iter()
                .map(|c| (c / lead).abs())
                .fold(0.0, f64::max);
        let samples = 20_000;
        (0..=samples).all(|i| {
            let x = -bound + 2.0 * bound * i as f64 / samples as f64;
            second.eval(x) >= -1e-12
        })
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new(
            (0..len)
                .map(|k| self.coefficient(k) + rhs.coefficient(k))
                .collect(),
        )
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

/// Node arrangement of a [`GridDensity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridLayout {
    /// Second-kind Chebyshev nodes on the support; the density is a smooth
    /// factor times `√((x-a)(b-x))`.
    SqrtEdge,
    /// Arbitrary increasing nodes with caller-supplied quadrature weights.
    Generic,
}

/// A probability density discretized on a quadrature grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDensity {
    nodes: Vec<f64>,
    /// Quadrature weight times density value at each node.
    weights: Vec<f64>,
    values: Vec<f64>,
    quad: Vec<f64>,
    support: (f64, f64),
    layout: GridLayout,
    #[serde(skip)]
    sqrt_edge: Option<SqrtEdgeData>,
}

#[derive(Debug, Clone)]
struct SqrtEdgeData {
    /// `u_k = q_k / √((y_k - a)(b - y_k))`
    smooth: Vec<f64>,
    /// Second-kind Chebyshev nodes in `[-1, 1]`, ascending.
    unit_nodes: Vec<f64>,
    /// `π/(N+1) sin²θ_k`, the rule for `∫ f(s) √(1-s²) ds`.
    unit_weights: Vec<f64>,
    bary: Vec<f64>,
}

/// Result of a principal-value evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvEvaluation {
    pub value: f64,
    /// The evaluation point coincided with a grid node.
    pub node_excised: bool,
}

impl GridDensity {
    /// Discretizes `density` on `[a, b]` assuming square-root vanishing at both
    /// endpoints.
    pub fn sqrt_edge(a: f64, b: f64, nodes: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        if !(a < b) || nodes < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs a < b and at least two nodes (a = {a}, b = {b}, nodes = {nodes})"
            )));
        }
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let angles = quad::chebyshev_u_angles(nodes);
        let h = PI / (nodes as f64 + 1.0);
        let mut xs = Vec::with_capacity(nodes);
        let mut values = Vec::with_capacity(nodes);
        let mut weights = Vec::with_capacity(nodes);
        let mut quad_w = Vec::with_capacity(nodes);
        let mut smooth = Vec::with_capacity(nodes);
        let mut unit_nodes = Vec::with_capacity(nodes);
        let mut unit_weights = Vec::with_capacity(nodes);
        let mut bary = Vec::with_capacity(nodes);
        for (idx, &theta) in angles.iter().enumerate() {
            let s = theta.cos();
            let sin = theta.sin();
            let x = c + r * s;
            let q = density(x);
            // Original index k = nodes - idx in the 1..=N enumeration.
            let k = nodes - idx;
            xs.push(x);
            values.push(q);
            weights.push(r * h * sin * q);
            quad_w.push(r * h * sin);
            smooth.push(q / (r * sin));
            unit_nodes.push(s);
            unit_weights.push(h * sin * sin);
            bary.push(if k % 2 == 0 { sin * sin } else { -sin * sin });
        }
        let grid = GridDensity {
            nodes: xs,
            weights,
            values,
            quad: quad_w,
            support: (a, b),
            layout: GridLayout::SqrtEdge,
            sqrt_edge: Some(SqrtEdgeData {
                smooth,
                unit_nodes,
                unit_weights,
                bary,
            }),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// A density on arbitrary increasing nodes with quadrature weights `quad`.
    pub fn generic(
        nodes: Vec<f64>,
        quad: Vec<f64>,
        values: Vec<f64>,
        support: (f64, f64),
    ) -> Result<Self> {
        if nodes.len() != quad.len() || nodes.len() != values.len() || nodes.is_empty() {
            return Err(Error::InvalidConfig(
                "grid nodes, weights and values must have equal nonzero length".into(),
            ));
        }
        let weights = quad.iter().zip(&values).map(|(w, v)| w * v).collect();
        let grid = GridDensity {
            nodes,
            weights,
            values,
            quad,
            support,
            layout: GridLayout::Generic,
            sqrt_edge: None,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.support;
        if !self.nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("grid nodes must be strictly increasing".into()));
        }
        if self.nodes.iter().any(|&x| x < a || x > b) {
            return Err(Error::InvalidConfig("grid nodes must lie inside the support".into()));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < -1e-10) {
            return Err(Error::InvalidConfig(
                "density values must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }

    /// `∫ f dq`
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `∫ q(x)^k dx`
    pub fn integrate_power(&self, k: i32) -> f64 {
        self.quad
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.powi(k))
            .sum()
    }

    /// Smooth factor `u` at the nodes, for square-root-edge grids.
    pub fn smooth_factor(&self) -> Option<&[f64]> {
        self.sqrt_edge.as_ref().map(|d| d.smooth.as_slice())
    }

    fn unit(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        (x - 0.5 * (a + b)) / (0.5 * (b - a))
    }

    /// Density at an arbitrary point (interpolated).
    pub fn density_at(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if x <= a || x >= b {
            return 0.0;
        }
        match &self.sqrt_edge {
            Some(data) => {
                let t = self.unit(x);
                let r = 0.5 * (b - a);
                barycentric(&data.unit_nodes, &data.bary, &data.smooth, t)
                    * r
                    * (1.0 - t * t).max(0.0).sqrt()
            }
            None => linear_interpolate(&self.nodes, &self.values, self.support, x),
        }
    }
}

fn linear_interpolate(xs: &[f64], ys: &[f64], support: (f64, f64), x: f64) -> f64 {
    let idx = xs.partition_point(|&v| v < x);
    let (x0, y0, x1, y1) = if idx == 0 {
        (support.0, 0.0, xs[0], ys[0])
    } else if idx == xs.len() {
        (xs[idx - 1], ys[idx - 1], support.1, 0.0)
    } else {
        (xs[idx - 1], ys[idx - 1], xs[idx], ys[idx])
    };
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn barycentric(nodes: &[f64], bary: &[f64], values: &[f64], t: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&s, &w), &v) in nodes.iter().zip(bary).zip(values) {
        let d = t - s;
        if d == 0.0 {
            return v;
        }
        let c = w / d;
        num += c * v;
        den += c;
    }
    num / den
}

/// Derivative of the interpolant at node `j`.
fn barycentric_node_derivative(nodes: &[f64], bary: &[f64], values: &[f64], j: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..nodes.len() {
        if k != j {
            acc += (bary[k] / bary[j]) * (values[k] - values[j]) / (nodes[j] - nodes[k]);
        }
    }
    acc
}

/// `p.v. ∫ q(y) / (x - y) dy`.
pub fn pv_stieltjes(q: &GridDensity, x: f64) -> f64 {
    pv_stieltjes_diagnosed(q, x).value
}

/// Principal-value Stieltjes transform, reporting whether the evaluation point
/// hit a grid node.
///
/// On the support the singularity is subtracted: for square-root-edge grids
/// `∫ √(1-s²)(u(s) - u(t))/(t - s) ds + u(t)·πt` with `u` the smooth factor,
/// for generic grids `∫ (q(y) - q(x))/(x - y) dy + q(x) log((x-a)/(b-x))`.
pub fn pv_stieltjes_diagnosed(q: &GridDensity, x: f64) -> PvEvaluation {
    let (a, b) = q.support;
    match &q.sqrt_edge {
        Some(data) => {
            let r = 0.5 * (b - a);
            let t = q.unit(x);
            if t.abs() > 1.1 {
                let s: f64 = data
                    .unit_nodes
                    .iter()
                    .zip(&data.unit_weights)
                    .zip(&data.smooth)
                    .map(|((&s, &w), &u)| w * u / (t - s))
                    .sum();
                return PvEvaluation {
                    value: r * s,
                    node_excised: false,
                };
            }
            let hit = data
                .unit_nodes
                .iter()
                .position(|&s| (t - s).abs() <= 1e-14 * (1.0 + t.abs()));
            let u_t = match hit {
                Some(j) => data.smooth[j],
                None => barycentric(&data.unit_nodes, &data.bary, &data.smooth, t),
            };
            let mut acc = 0.0;
            for (k, ((&s, &w), &u)) in data
                .unit_nodes
                .iter()
                .zip(&data.unit_weights)
                .zip(&data.smooth)
                .enumerate()
            {
                if Some(k) == hit {
                    let du = barycentric_node_derivative(&data.unit_nodes, &data.bary, &data.smooth, k);
                    acc -= w * du;
                } else {
                    acc += w * (u - u_t) / (t - s);
                }
            }
            let kernel = if t.abs() <= 1.0 {
                PI * t
            } else {
                PI * (t - t.signum() * (t * t - 1.0).sqrt())
            };
            PvEvaluation {
                value: r * (acc + u_t * kernel),
                node_excised: hit.is_some(),
            }
        }
        None => {
            if x <= a || x >= b {
                let value = q
                    .nodes
                    .iter()
                    .zip(&q.weights)
                    .map(|(&y, &w)| w / (x - y))
                    .sum();
                return PvEvaluation {
                    value,
                    node_excised: false,
                };
            }
            let q_x = linear_interpolate(&q.nodes, &q.values, q.support, x);
            let mut node_excised = false;
            let mut acc = 0.0;
            for ((&y, &w), &v) in q.nodes.iter().zip(&q.quad).zip(&q.values) {
                if (x - y).abs() <= 1e-14 * (1.0 + x.abs()) {
                    node_excised = true;
                    continue;
                }
                acc += w * (v - q_x) / (x - y);
            }
            PvEvaluation {
                value: acc + q_x * ((x - a) / (b - x)).ln(),
                node_excised,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn semicircle(radius: f64) -> GridDensity {
        let r2 = radius * radius;
        GridDensity::sqrt_edge(-radius, radius, DEFAULT_GRID_NODES, |x| {
            2.0 / (PI * r2) * (r2 - x * x).max(0.0).sqrt()
        })
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Polynomial::monomial(2, 1.0).eval(3.0), 9.0);
        assert_eq!(Polynomial::zero().eval(5.0), 0.0);
        assert_eq!(Polynomial::new(vec![1.0, 2.0, 0.0, 1.0]).eval(2.0), 13.0);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(Polynomial::monomial(2, 1.0).derivative(), Polynomial::monomial(1, 2.0));
        assert!(Polynomial::constant(7.0).derivative().is_zero());
        assert_eq!(Polynomial::monomial(4, 1.0).derivative(), Polynomial::monomial(3, 4.0));
    }

    #[test]
    fn confinement_examples() {
        assert!(Polynomial::monomial(2, 1.0).is_confining());
        assert!(!Polynomial::monomial(3, 1.0).is_confining());
        assert!(Polynomial::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).is_confining());
        assert!(!Polynomial::zero().is_confining());
        assert!(!Polynomial::monomial(2, -1.0).is_confining());
    }

    #[test]
    fn convexity_check() {
        assert!(Polynomial::monomial(4, 1.0).is_convex());
        assert!(!Polynomial::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).is_convex());
    }

    #[test]
    fn trailing_zeros_trimmed_and_json_shape() {
        let p = Polynomial::new(vec![1.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 0);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1.0]");
        let q: Polynomial = serde_json::from_str("[0.0, 1.5, 0.0]").unwrap();
        assert_eq!(q.coeffs(), &[0.0, 1.5]);
    }

    #[test]
    fn compose_affine_matches_evaluation() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        let q = p.compose_affine(0.7, -1.3);
        for x in [-2.0, -0.1, 0.0, 1.4] {
            assert!((q.eval(x) - p.eval(0.7 - 1.3 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn semicircle_hilbert_transform_is_identity_on_support() {
        let q = semicircle(2f64.sqrt());
        assert!(q.is_normalized(1e-12));
        let v = pv_stieltjes(&q, 0.5);
        assert!((v - 0.5).abs() < 1e-12, "{v}");
        assert!(pv_stieltjes(&q, 0.0).abs() < 1e-13);
        for x in [-1.3, -0.77, 0.123, 1.2, 1.41] {
            assert!((pv_stieltjes(&q, x) - x).abs() < 1e-11, "x = {x}");
        }
    }

    #[test]
    fn node_hit_uses_interpolant_derivative() {
        let q = semicircle(2f64.sqrt());
        let x = q.nodes()[700];
        let ev = pv_stieltjes_diagnosed(&q, x);
        assert!(ev.node_excised);
        assert!((ev.value - x).abs() < 1e-9);
    }

    #[test]
    fn tail_decays_like_inverse_distance() {
        let q = semicircle(2f64.sqrt());
        let x = 100.0;
        assert!((x * pv_stieltjes(&q, x) - 1.0).abs() < 0.01);
        // Off-support closed form for the semicircle: x - sqrt(x^2 - 2).
        for x in [1.5f64, 3.0, 14.0] {
            let exact = x - (x * x - 2.0).sqrt();
            assert!((pv_stieltjes(&q, x) - exact).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn density_interpolation_is_exact_for_polynomial_factor() {
        let b = (4.0f64 / 3.0).powf(0.25);
        let q = GridDensity::sqrt_edge(-b, b, 64, |x| {
            (4.0 * x * x + 2.0 * b * b) * (b * b - x * x).max(0.0).sqrt() / (2.0 * PI)
        })
        .unwrap();
        for x in [-1.0, -0.3, 0.05, 0.9] {
            let exact = (4.0 * x * x + 2.0 * b * b) * (b * b - x * x).sqrt() / (2.0 * PI);
            assert!((q.density_at(x) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_grid_principal_value_converges() {
        // Semicircle represented on a Gauss-Legendre grid instead.
        let rule = quad::gauss_legendre(4000).mapped(-2f64.sqrt(), 2f64.sqrt());
        let values: Vec<f64> = rule
            .nodes
            .iter()
            .map(|x| (2.0 - x * x).max(0.0).sqrt() / PI)
            .collect();
        let q = GridDensity::generic(
            rule.nodes.clone(),
            rule.weights.clone(),
            values,
            (-2f64.sqrt(), 2f64.sqrt()),
        )
        .unwrap();
        assert!(q.is_normalized(1e-8));
        assert!((pv_stieltjes(&q, 0.5) - 0.5).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn antiderivative_then_derivative_is_identity(
            coeffs in proptest::collection::vec(-10.0f64..10.0, 0..12)
        ) {
            let p = Polynomial::new(coeffs);
            let back = p.antiderivative().derivative();
            prop_assert_eq!(back.coeffs().len(), p.coeffs().len());
            for (a, b) in back.coeffs().iter().zip(p.coeffs()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn pv_is_odd_for_symmetric_densities(d in 0.01f64..1.4, radius in 0.5f64..3.0) {
            let q = semicircle(radius);
            let d = d * radius / 1.5;
            prop_assert!((pv_stieltjes(&q, d) + pv_stieltjes(&q, -d)).abs() < 1e-8);
        }

        #[test]
        fn pv_tail_at_ten_radii(radius in 0.2f64..5.0, shift in -3.0f64..3.0) {
            let r2 = radius * radius;
            let q = GridDensity::sqrt_edge(shift - radius, shift + radius, 512, |x| {
                2.0 / (PI * r2) * (r2 - (x - shift).powi(2)).max(0.0).sqrt()
            }).unwrap();
            let x = shift + 10.0 * radius;
            prop_assert!(((x - shift) * pv_stieltjes(&q, x) - 1.0).abs() < 0.05);
        }
    }
}
