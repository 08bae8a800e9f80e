//! Large-n limit: one-cut equilibrium measures and the free quantities built
//! from them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Support, Theta};
use crate::poly::{pv_stieltjes, GridDensity, GridLayout, Polynomial, DEFAULT_GRID_NODES};
use crate::quad;

/// Chebyshev–Gauss nodes for the endpoint conditions.
const ENDPOINT_NODES: usize = 128;
const NEWTON_MAX_ITER: usize = 100;
/// Tolerances of the solver contract.
pub const RESIDUAL_TOL: f64 = 1e-6;
pub const MASS_TOL: f64 = 1e-8;
pub const NEGATIVITY_TOL: f64 = 1e-10;
/// Warning threshold for potential reconstruction.
pub const RECONSTRUCTION_TOL: f64 = 1e-4;

/// `q(x) = (1/2π) h(x) √((x−a)(b−x))` on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMeasure {
    pub a: f64,
    pub b: f64,
    pub h: Polynomial,
}

impl EquilibriumMeasure {
    pub fn centre(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn radius(&self) -> f64 {
        0.5 * (self.b - self.a)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        self.h.eval(x) * ((x - self.a) * (self.b - x)).sqrt() / (2.0 * PI)
    }

    /// Discretization on second-kind Chebyshev nodes.
    pub fn grid(&self, nodes: usize) -> Result<GridDensity> {
        GridDensity::sqrt_edge(self.a, self.b, nodes, |x| self.density(x))
    }

    pub fn default_grid(&self) -> Result<GridDensity> {
        self.grid(DEFAULT_GRID_NODES)
    }

    /// The semicircle law of radius `r` centred at `c`.
    pub fn semicircle(c: f64, r: f64) -> Self {
        EquilibriumMeasure {
            a: c - r,
            b: c + r,
            h: Polynomial::constant(4.0 / (r * r)),
        }
    }

    /// `∫ f dq`
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let rule = quad::gauss_legendre(512);
        let (c, r) = (self.centre(), self.radius());
        // x = c + r cos φ absorbs the square-root edges.
        let g = |phi: f64| {
            let x = c + r * phi.cos();
            f(x) * self.h.eval(x) * r * r * phi.sin().powi(2) / (2.0 * PI)
        };
        rule.mapped(0.0, PI).integrate(g)
    }
}

/// `∫_0^π g(cos φ) dφ` with an `n`-point Chebyshev–Gauss rule.
fn cheb_gauss(n: usize, g: impl Fn(f64) -> f64) -> f64 {
    quad::chebyshev_t_angles(n).iter().map(|a| g(a.cos())).sum::<f64>() * PI / n as f64
}

/// Mean and standard deviation of the one-particle law `e^{-p}`.
fn gibbs_moments(p: &Polynomial) -> (f64, f64) {
    let rule = quad::gauss_legendre(2000).mapped(-40.0, 40.0);
    let pmin = rule.nodes.iter().map(|&x| p.eval(x)).fold(f64::INFINITY, f64::min);
    let w = |x: f64| (-(p.eval(x) - pmin)).exp();
    let z = rule.integrate(w);
    let m1 = rule.integrate(|x| x * w(x)) / z;
    let m2 = rule.integrate(|x| x * x * w(x)) / z;
    (m1, (m2 - m1 * m1).max(1e-12).sqrt())
}

/// Endpoint residuals `(∫ p′ dφ, ∫ x p′ dφ − 2π)` and their Jacobian in `(c, r)`.
fn endpoint_system(dp: &Polynomial, d2p: &Polynomial, c: f64, r: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let m = ENDPOINT_NODES;
    let f1 = cheb_gauss(m, |t| dp.eval(c + r * t));
    let f2 = cheb_gauss(m, |t| {
        let x = c + r * t;
        x * dp.eval(x)
    }) - 2.0 * PI;
    let j11 = cheb_gauss(m, |t| d2p.eval(c + r * t));
    let j12 = cheb_gauss(m, |t| t * d2p.eval(c + r * t));
    let j21 = cheb_gauss(m, |t| {
        let x = c + r * t;
        dp.eval(x) + x * d2p.eval(x)
    });
    let j22 = cheb_gauss(m, |t| {
        let x = c + r * t;
        t * (dp.eval(x) + x * d2p.eval(x))
    });
    ([f1, f2], [[j11, j12], [j21, j22]])
}

/// `U_0 … U_{k}` as polynomials in `t`.
fn chebyshev_u_polys(k: usize) -> Vec<Polynomial> {
    let mut out = vec![Polynomial::constant(1.0)];
    if k >= 1 {
        out.push(Polynomial::monomial(1, 2.0));
    }
    let two_t = Polynomial::monomial(1, 2.0);
    while out.len() <= k {
        let l = out.len();
        out.push(&(&two_t * &out[l - 1]) - &out[l - 2]);
    }
    out
}

/// Equilibrium measure of a confining potential in the one-cut regime.
///
/// Solves `∫_a^b p′/√((x−a)(b−x)) dx = 0` and `∫_a^b x p′/√((x−a)(b−x)) dx = 2π`
/// for the endpoints by Newton's method, then reads the density factor off the
/// Chebyshev expansion `p′(c + r t) = Σ c_k T_k(t)` as
/// `h = Σ_{k≥1} (c_k/r) U_{k−1}(t)`.
pub fn solve_one_cut(p: &Polynomial) -> Result<EquilibriumMeasure> {
    p.check_degree()?;
    if !p.is_confining() {
        return Err(Error::NotConfining(format!("{p}")));
    }
    let dp = p.derivative();
    let d2p = dp.derivative();
    let (mean, sd) = gibbs_moments(p);
    let (mut c, mut r) = (mean, 2.0 * sd);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let (f, j) = endpoint_system(&dp, &d2p, c, r);
        let norm = f[0].abs().max(f[1].abs());
        trace.push(format!("c = {c:.12}, r = {r:.12}, |F| = {norm:.3e}"));
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dc = (j[1][1] * f[0] - j[0][1] * f[1]) / det;
        let dr = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
        let mut step = 1.0;
        while r - step * dr <= 0.0 {
            step *= 0.5;
        }
        c -= step * dc;
        r -= step * dr;
        if (dc.abs() + dr.abs()) * step < 1e-15 * (1.0 + c.abs() + r.abs()) || norm < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        let (f, _) = endpoint_system(&dp, &d2p, c, r);
        if f[0].abs().max(f[1].abs()) > 1e-11 {
            return Err(Error::Solver(format!(
                "endpoint Newton iteration did not converge:\n{}",
                trace.join("\n")
            )));
        }
    }
    let coeffs = quad::chebyshev_coefficients(|t| dp.eval(c + r * t), dp.degree() + 2);
    let us = chebyshev_u_polys(coeffs.len());
    let mut h_t = Polynomial::zero();
    for (k, &ck) in coeffs.iter().enumerate().skip(1) {
        h_t = &h_t + &us[k - 1].scale(ck / r);
    }
    let h = h_t.compose_affine(-c / r, 1.0 / r);
    let q = EquilibriumMeasure { a: c - r, b: c + r, h };
    check_measure(&q, p)?;
    Ok(q)
}

fn check_measure(q: &EquilibriumMeasure, p: &Polynomial) -> Result<()> {
    let (c, r) = (q.centre(), q.radius());
    let probe = 1024;
    let (min_h, at) = (0..probe)
        .map(|i| {
            let x = c + r * (PI * (i as f64 + 0.5) / probe as f64).cos();
            (q.density(x), x)
        })
        .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc });
    if min_h < -NEGATIVITY_TOL {
        return Err(Error::MultiCut { min_density: min_h, at });
    }
    let mass = q.integrate(|_| 1.0);
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(Error::Solver(format!("equilibrium mass {mass} differs from 1")));
    }
    let res = biane_residual(q, p)?;
    if res > RESIDUAL_TOL {
        return Err(Error::Solver(format!("integral-equation residual {res:e} exceeds {RESIDUAL_TOL:e}")));
    }
    Ok(())
}

/// `sup |2 p.v.∫ q(y)/(x−y) dy − p′(x)|` over the interior 98% of the support.
pub fn biane_residual(q: &EquilibriumMeasure, p: &Polynomial) -> Result<f64> {
    let grid = q.default_grid()?;
    let dp = p.derivative();
    let (c, r) = (q.centre(), q.radius());
    let points = 1001;
    Ok((0..points)
        .map(|i| {
            let x = c + r * 0.98 * (2.0 * i as f64 / (points - 1) as f64 - 1.0);
            (2.0 * pv_stieltjes(&grid, x) - dp.eval(x)).abs()
        })
        .fold(0.0, f64::max))
}

/// `∬ log|x − y| dq(x) dq(y)`.
///
/// Square-root-edge grids use `log|t − s| = −log 2 − Σ_k (2/k) T_k(t) T_k(s)`
/// on the support mapped to `[−1, 1]`, so that
/// `χ = log r − log 2 − Σ_k (2/k) m_k²` with Chebyshev moments `m_k`. Other
/// grids use tensor quadrature off the diagonal plus the cell correction
/// `w² (log w − 3/2)` on it.
pub fn log_energy(q: &GridDensity) -> f64 {
    let (a, b) = q.support();
    match q.layout() {
        GridLayout::SqrtEdge => {
            let c = 0.5 * (a + b);
            let r = 0.5 * (b - a);
            let ts: Vec<f64> = q.nodes().iter().map(|x| ((x - c) / r).clamp(-1.0, 1.0)).collect();
            let thetas: Vec<f64> = ts.iter().map(|t| t.acos()).collect();
            let mut sum = 0.0;
            let kmax = q.nodes().len();
            let mut small = 0;
            for k in 1..=kmax {
                let m: f64 = thetas
                    .iter()
                    .zip(q.weights())
                    .map(|(th, w)| w * (k as f64 * th).cos())
                    .sum();
                sum += 2.0 / k as f64 * m * m;
                // Moments of a smooth factor vanish quickly.
                if m.abs() < 1e-17 {
                    small += 1;
                    if small > 8 {
                        break;
                    }
                } else {
                    small = 0;
                }
            }
            r.ln() - 2f64.ln() - sum
        }
        GridLayout::Generic => {
            let xs = q.nodes();
            let ws = q.weights();
            let values = q.values();
            let mut off = 0.0;
            let mut diag = 0.0;
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if i != j {
                        off += ws[i] * ws[j] * (xs[i] - xs[j]).abs().ln();
                    }
                }
                let cell = if values[i] > 0.0 { ws[i] / values[i] } else { 0.0 };
                if cell > 0.0 {
                    diag += values[i] * values[i] * cell * cell * (cell.ln() - 1.5);
                }
            }
            off + diag
        }
    }
}

/// `x ↦ 2 p.v.∫ q(y)/(x − y) dy`, which equals `p′` on the support of an
/// equilibrium measure.
#[derive(Debug, Clone)]
pub struct ConjugateVariable {
    grid: GridDensity,
}

impl ConjugateVariable {
    pub fn eval(&self, x: f64) -> f64 {
        2.0 * pv_stieltjes(&self.grid, x)
    }

    pub fn density(&self) -> &GridDensity {
        &self.grid
    }
}

pub fn conjugate_variable(q: &GridDensity) -> ConjugateVariable {
    ConjugateVariable { grid: q.clone() }
}

/// `Φ = ∫ (2 p.v.∫ q(y)/(x−y) dy)² dq(x)`.
pub fn free_fisher(q: &GridDensity) -> f64 {
    let conj = conjugate_variable(q);
    q.integrate(|x| conj.eval(x).powi(2))
}

/// `(4π²/3) ∫ q³`, which equals `Φ` for measures with a bounded density.
pub fn free_fisher_cubic(q: &GridDensity) -> f64 {
    4.0 * PI * PI / 3.0 * q.integrate_power(3)
}

/// `π_R(h) = −∫ h dq + χ(q)` with `q` the equilibrium measure of `h`.
pub fn free_pressure(h: &Polynomial, radius: f64) -> Result<f64> {
    let q = solve_one_cut(h)?;
    if q.a < -radius || q.b > radius {
        return Err(Error::SupportEscapes { a: q.a, b: q.b, radius });
    }
    let grid = q.default_grid()?;
    Ok(-grid.integrate(|x| h.eval(x)) + log_energy(&grid))
}

fn equilibrium_for(spec: &ModelSpec, theta: &Theta) -> Result<(Polynomial, EquilibriumMeasure)> {
    let p_theta = spec.potential_at(theta)?;
    if spec.support == Support::Positive && !p_theta.is_confining() {
        return Err(Error::Unsupported(
            "equilibrium measures with a hard edge at 0 are not implemented".into(),
        ));
    }
    let q = solve_one_cut(&p_theta)?;
    if spec.support == Support::Positive && q.a <= 0.0 {
        return Err(Error::Unsupported(format!(
            "equilibrium support [{}, {}] reaches the wall at 0",
            q.a, q.b
        )));
    }
    Ok((p_theta, q))
}

/// `(χ − ∫ p_θ dq_θ, χ − ∫ p dq_θ)`, the limits of `ψ` (eigenvalue convention)
/// and `φ`.
pub fn limit_pressure_and_legendre(spec: &ModelSpec, theta: &Theta) -> Result<(f64, f64)> {
    let (p_theta, q) = equilibrium_for(spec, theta)?;
    let grid = q.default_grid()?;
    let chi = log_energy(&grid);
    Ok((
        chi - grid.integrate(|x| p_theta.eval(x)),
        chi - grid.integrate(|x| spec.base.eval(x)),
    ))
}

/// `∫ F_i dq_θ`, the limits of the dual coordinates.
pub fn limit_dual_coordinates(spec: &ModelSpec, theta: &Theta) -> Result<Vec<f64>> {
    let (_, q) = equilibrium_for(spec, theta)?;
    let grid = q.default_grid()?;
    Ok(spec.perturbations.iter().map(|f| grid.integrate(|x| f.eval(x))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeReport {
    pub measure: EquilibriumMeasure,
    pub chi: f64,
    /// `π_R(p_θ)` over the support's enclosing interval.
    pub free_pressure: f64,
    pub phi_free: f64,
    /// `(4π²/3) ∫ q³`
    pub phi_cubic: f64,
    pub limit_pressure: f64,
    pub limit_legendre: f64,
    /// `−χ`, the limit of the entropy.
    pub limit_entropy: f64,
    pub limit_eta: Vec<f64>,
    pub biane_residual: f64,
    pub convex: bool,
}

pub fn free_report(spec: &ModelSpec, theta: &Theta) -> Result<FreeReport> {
    let (p_theta, q) = equilibrium_for(spec, theta)?;
    let grid = q.default_grid()?;
    let chi = log_energy(&grid);
    let int_p_theta = grid.integrate(|x| p_theta.eval(x));
    Ok(FreeReport {
        chi,
        free_pressure: chi - int_p_theta,
        phi_free: free_fisher(&grid),
        phi_cubic: free_fisher_cubic(&grid),
        limit_pressure: chi - int_p_theta,
        limit_legendre: chi - grid.integrate(|x| spec.base.eval(x)),
        limit_entropy: -chi,
        limit_eta: spec.perturbations.iter().map(|f| grid.integrate(|x| f.eval(x))).collect(),
        biane_residual: biane_residual(&q, &p_theta)?,
        convex: p_theta.is_convex(),
        measure: q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub potential: Polynomial,
    /// Largest fit residual of `p′` on the fitting points.
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Least-squares fit of `p′` of degree `degree − 1` to `2 p.v.∫ q(y)/(x−y) dy`
/// on the interior 95% of the support, integrated with zero constant term.
pub fn reconstruct_potential(q: &GridDensity, degree: usize) -> Result<Reconstruction> {
    if degree == 0 || degree > crate::poly::MAX_DEGREE {
        return Err(Error::InvalidConfig(format!("degree {degree} outside 1..={}", crate::poly::MAX_DEGREE)));
    }
    let (a, b) = q.support();
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let conj = conjugate_variable(q);
    let points = 400.max(4 * degree);
    let ts: Vec<f64> = (0..points)
        .map(|i| 0.95 * (PI * (i as f64 + 0.5) / points as f64).cos())
        .collect();
    let ys: Vec<f64> = ts.iter().map(|t| conj.eval(c + r * t)).collect();
    // Fit in the Chebyshev basis of t for conditioning.
    let cols = degree;
    let design = DMatrix::from_fn(points, cols, |i, k| (k as f64 * ts[i].acos()).cos());
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&DVector::from_vec(ys.clone()), 1e-13)
        .map_err(|e| Error::Solver(e.to_string()))?;
    let fitted = &design * &coef;
    let residual = fitted.iter().zip(&ys).map(|(f, y)| (f - y).abs()).fold(0.0, f64::max);
    // Chebyshev T_k as monomials in t, then substitute t = (x − c)/r.
    let mut ts_poly = vec![Polynomial::constant(1.0), Polynomial::monomial(1, 1.0)];
    let two_t = Polynomial::monomial(1, 2.0);
    while ts_poly.len() < cols {
        let l = ts_poly.len();
        ts_poly.push(&(&two_t * &ts_poly[l - 1]) - &ts_poly[l - 2]);
    }
    let mut dp_t = Polynomial::zero();
    for k in 0..cols {
        dp_t = &dp_t + &ts_poly[k].scale(coef[k]);
    }
    let dp = dp_t.compose_affine(-c / r, 1.0 / r);
    // Drop rounding-level coefficients.
    let scale = dp.coeffs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cleaned = Polynomial::new(
        dp.coeffs()
            .iter()
            .map(|&v| if v.abs() < 1e-12 * scale { 0.0 } else { v })
            .collect(),
    );
    let warning = (residual > RECONSTRUCTION_TOL).then(|| {
        format!("fit residual {residual:.2e} exceeds {RECONSTRUCTION_TOL:e}; the measure may not come from a polynomial potential")
    });
    Ok(Reconstruction {
        potential: cleaned.antiderivative(),
        residual,
        warning,
    })
}
