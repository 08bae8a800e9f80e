//! Exact small-n engine built on orthogonal polynomials for the weight `e^{-n p_θ}`.
//!
//! The partition function of the eigenvalue density is `n! Π_{l<n} h_l`, with
//! `h_l` the squared norms of the monic orthogonal polynomials. Recurrence
//! coefficients come from the discretized Stieltjes procedure on a dense
//! Gauss–Legendre grid over a truncation window around the minimum of `p_θ`.
//! Pressure derivatives are central finite differences of the pressure; the
//! determinantal structure also gives trace cumulants directly.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Support, Theta};
use crate::poly::{GridDensity, Polynomial};
use crate::quad;
use crate::tensor::Tensor3;

pub const DEFAULT_CAP: usize = 24;
pub const DEFAULT_GRID_NODES: usize = 4096;
/// The window edge sits where `n (p - min p)` reaches this many decades.
pub const WINDOW_DECADES: f64 = 64.0;

/// Normalization of the pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `∫ Δ(λ)² Π e^{-n p(λ_k)} dλ`
    #[default]
    Eigenvalue,
    /// Hermitian matrices with the Hilbert–Schmidt volume `Tr(dA²)`.
    Matrix,
    /// Hermitian matrices with Lebesgue measure on the real coordinates
    /// `A_ii, Re A_ij, Im A_ij`.
    MatrixEntrywise,
}

impl Convention {
    pub const ALL: [Convention; 3] = [
        Convention::Eigenvalue,
        Convention::Matrix,
        Convention::MatrixEntrywise,
    ];
}

fn log_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `log C_n`, the factor turning the eigenvalue integral into a matrix integral.
pub fn log_volume_constant(n: usize, convention: Convention) -> f64 {
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    let superfactorial: f64 = (1..=n).map(log_factorial).sum();
    match convention {
        Convention::Eigenvalue => 0.0,
        Convention::Matrix => pairs * (2.0 * std::f64::consts::PI).ln() - superfactorial,
        Convention::MatrixEntrywise => pairs * std::f64::consts::PI.ln() - superfactorial,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactOptions {
    pub grid_nodes: usize,
    pub cap: usize,
    /// Finite-difference step for second derivatives.
    pub step2: f64,
    /// Finite-difference step for third derivatives.
    pub step3: f64,
    pub richardson: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            grid_nodes: DEFAULT_GRID_NODES,
            cap: DEFAULT_CAP,
            step2: 1e-3,
            step3: 5e-3,
            richardson: true,
        }
    }
}

/// Truncation interval plus the value `shift = min p_θ` factored out of the weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub shift: f64,
}

/// Jacobi matrix and norms of the monic orthogonal polynomials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrenceTable {
    /// `α_l`, `l = 0..levels`
    pub alphas: Vec<f64>,
    /// `β_{l+1} = h_{l+1}/h_l`, `l = 0..levels-1`
    pub betas: Vec<f64>,
    /// `log h_l`, `l = 0..levels`
    pub log_norms: Vec<f64>,
    pub weight_theta: Theta,
    pub levels: usize,
    pub n: usize,
    pub window: Window,
    pub grid_nodes: usize,
}

impl RecurrenceTable {
    /// Hash of everything that determines the table.
    pub fn cache_key(spec: &ModelSpec, theta: &Theta, levels: usize, window: &Window) -> String {
        let doc = serde_json::json!({
            "spec": spec,
            "theta": theta,
            "levels": levels,
            "window": window,
        });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    /// Orthonormal polynomials at `x`, levels `0..count`.
    pub fn orthonormal_at(&self, x: f64, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        let q0 = (-0.5 * (self.log_norms[0] + self.n as f64 * self.window.shift)).exp();
        let mut prev = 0.0;
        let mut cur = q0;
        for l in 0..count {
            out.push(cur);
            if l + 1 == count {
                break;
            }
            let sb_prev = if l == 0 { 0.0 } else { self.betas[l - 1].sqrt() };
            let next = ((x - self.alphas[l]) * cur - sb_prev * prev) / self.betas[l].sqrt();
            prev = cur;
            cur = next;
        }
        out
    }

    /// Largest deviation of the Gram matrix of the orthonormal basis from the
    /// identity on the construction grid.
    pub fn orthonormality_defect(&self, spec: &ModelSpec) -> f64 {
        let p = spec.potential_unchecked(&self.weight_theta.values);
        let grid = Discretized::new(&p, spec.n, &self.window, self.grid_nodes);
        let basis: Vec<Vec<f64>> = grid
            .nodes
            .iter()
            .map(|&x| self.orthonormal_at(x, self.levels))
            .collect();
        let mut worst = 0.0f64;
        for a in 0..self.levels {
            for b in 0..=a {
                let g: f64 = basis
                    .iter()
                    .zip(&grid.mass)
                    .map(|(q, w)| w * q[a] * q[b])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Quadrature nodes with masses `GL weight × e^{-n(p - shift)}`.
struct Discretized {
    nodes: Vec<f64>,
    quad: Vec<f64>,
    mass: Vec<f64>,
}

impl Discretized {
    fn new(p: &Polynomial, n: usize, window: &Window, grid_nodes: usize) -> Self {
        let rule = quad::gauss_legendre(grid_nodes).mapped(window.lo, window.hi);
        let nf = n as f64;
        let mass = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * (-nf * (p.eval(x) - window.shift)).exp())
            .collect();
        Discretized {
            nodes: rule.nodes,
            quad: rule.weights,
            mass,
        }
    }
}

struct Stieltjes {
    alphas: Vec<f64>,
    betas: Vec<f64>,
    log_h0: f64,
}

fn stieltjes(grid: &Discretized, levels: usize, window: &Window) -> Result<Stieltjes> {
    let h0: f64 = grid.mass.iter().sum();
    if !(h0.is_finite() && h0 > 0.0) {
        let half = 0.5 * (window.hi - window.lo);
        return Err(Error::Truncation {
            lo: window.lo,
            hi: window.hi,
            suggested: 2.0 * half,
        });
    }
    let k = grid.nodes.len();
    let mut alphas = Vec::with_capacity(levels);
    let mut betas = Vec::with_capacity(levels.saturating_sub(1));
    let mut prev = vec![0.0; k];
    let mut cur = vec![1.0 / h0.sqrt(); k];
    for l in 0..levels {
        let alpha: f64 = (0..k)
            .map(|i| grid.mass[i] * grid.nodes[i] * cur[i] * cur[i])
            .sum();
        alphas.push(alpha);
        if l + 1 < levels {
            let sb = if l == 0 { 0.0 } else { betas[l - 1] };
            let sb = f64::sqrt(sb);
            let mut r: Vec<f64> = (0..k)
                .map(|i| (grid.nodes[i] - alpha) * cur[i] - sb * prev[i])
                .collect();
            // One pass of re-orthogonalization against the two previous levels.
            for q in [&cur, &prev] {
                let c: f64 = (0..k).map(|i| grid.mass[i] * r[i] * q[i]).sum();
                for i in 0..k {
                    r[i] -= c * q[i];
                }
            }
            let beta: f64 = (0..k).map(|i| grid.mass[i] * r[i] * r[i]).sum();
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::Solver(format!(
                    "Stieltjes recurrence broke down at level {l} (beta = {beta})"
                )));
            }
            betas.push(beta);
            let s = beta.sqrt();
            let next: Vec<f64> = r.iter().map(|v| v / s).collect();
            prev = std::mem::replace(&mut cur, next);
        }
    }
    Ok(Stieltjes {
        alphas,
        betas,
        log_h0: h0.ln(),
    })
}

fn cauchy_root_bound(p: &Polynomial) -> f64 {
    if p.degree() == 0 {
        return 1.0;
    }
    let lead = p.leading_coefficient();
    1.0 + p.coeffs()[..p.degree()]
        .iter()
        .map(|c| (c / lead).abs())
        .fold(0.0, f64::max)
}

/// Truncation window for `p_θ`: the minimum `x*` of `p_θ` on the support and
/// the outermost points where `n(p_θ − p_θ(x*))` reaches `64 log 10`.
pub fn truncation_window(spec: &ModelSpec, theta: &Theta) -> Result<Window> {
    let p = spec.potential_at(theta)?;
    window_for(&p, spec.n, spec.support)
}

fn window_for(p: &Polynomial, n: usize, support: Support) -> Result<Window> {
    let r = cauchy_root_bound(&p.derivative()).max(1.0);
    let lo_range = match support {
        Support::Full => -r,
        Support::Positive => 0.0,
    };
    let samples = 4096;
    let xs: Vec<f64> = (0..=samples)
        .map(|i| lo_range + (r - lo_range) * i as f64 / samples as f64)
        .collect();
    let (imin, _) = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, p.eval(x)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    // Golden-section refinement inside the neighbouring cells.
    let mut a = xs[imin.saturating_sub(1)];
    let mut b = xs[(imin + 1).min(samples)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if p.eval(c) < p.eval(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let xstar = 0.5 * (a + b);
    let shift = p.eval(xstar).min(p.eval(xs[imin]));
    let threshold = WINDOW_DECADES * std::f64::consts::LN_10;
    let nf = n as f64;
    let f = |x: f64| nf * (p.eval(x) - shift) - threshold;

    let bisect = |mut inside: f64, mut outside: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if f(mid) < 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        outside
    };
    let edge = |dir: f64| -> f64 {
        let boundary = if dir > 0.0 { r } else { -r };
        if f(boundary) < 0.0 {
            let mut inside = boundary;
            let mut step = r;
            let mut outside = boundary + dir * step;
            while f(outside) < 0.0 {
                inside = outside;
                step *= 2.0;
                outside = boundary + dir * step;
            }
            bisect(inside, outside)
        } else {
            // Outermost sample with f < 0 on this side of the minimum.
            let last = if dir > 0.0 {
                xs.iter().rposition(|&x| f(x) < 0.0).unwrap_or(imin)
            } else {
                xs.iter().position(|&x| f(x) < 0.0).unwrap_or(imin)
            };
            let inside = xs[last];
            let outside = if dir > 0.0 {
                xs[(last + 1).min(samples)]
            } else {
                xs[last.saturating_sub(1)]
            };
            if inside == outside {
                inside
            } else {
                bisect(inside, outside)
            }
        }
    };
    let hi = edge(1.0);
    let lo = match support {
        Support::Positive if f(0.0) < 0.0 => 0.0,
        Support::Positive => edge(-1.0).max(0.0),
        Support::Full => edge(-1.0),
    };
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Truncation {
            lo,
            hi,
            suggested: 2.0 * r,
        });
    }
    Ok(Window { lo, hi, shift })
}

pub fn build_recurrence(spec: &ModelSpec, theta: &Theta, levels: usize) -> Result<RecurrenceTable> {
    let window = truncation_window(spec, theta)?;
    build_recurrence_in(spec, theta, levels, &window, DEFAULT_GRID_NODES)
}

/// Recurrence on a caller-fixed window and grid size.
pub fn build_recurrence_in(
    spec: &ModelSpec,
    theta: &Theta,
    levels: usize,
    window: &Window,
    grid_nodes: usize,
) -> Result<RecurrenceTable> {
    if levels < spec.n {
        return Err(Error::InvalidConfig(format!(
            "levels = {levels} must be at least n = {}",
            spec.n
        )));
    }
    spec.check_theta(theta)?;
    recurrence_unchecked(spec, &theta.values, levels, window, grid_nodes).map(|(t, _)| t)
}

fn recurrence_unchecked(
    spec: &ModelSpec,
    theta: &[f64],
    levels: usize,
    window: &Window,
    grid_nodes: usize,
) -> Result<(RecurrenceTable, Discretized)> {
    let p = spec.potential_unchecked(theta);
    let grid = Discretized::new(&p, spec.n, window, grid_nodes);
    let st = stieltjes(&grid, levels, window)?;
    let nf = spec.n as f64;
    let mut log_norms = Vec::with_capacity(levels);
    let mut acc = st.log_h0 - nf * window.shift;
    log_norms.push(acc);
    for b in &st.betas {
        acc += b.ln();
        log_norms.push(acc);
    }
    Ok((
        RecurrenceTable {
            alphas: st.alphas,
            betas: st.betas,
            log_norms,
            weight_theta: Theta::new(theta.to_vec()),
            levels,
            n: spec.n,
            window: *window,
            grid_nodes,
        },
        grid,
    ))
}

/// `log n! + Σ_{l<n} log h_l`
pub fn log_partition_eigen(table: &RecurrenceTable, n: usize) -> Result<f64> {
    if table.log_norms.len() < n {
        return Err(Error::InvalidConfig(format!(
            "table has {} norms, need {n}",
            table.log_norms.len()
        )));
    }
    Ok(log_factorial(n) + table.log_norms[..n].iter().sum::<f64>())
}

fn check_cap(spec: &ModelSpec, opts: &ExactOptions) -> Result<()> {
    if spec.n > opts.cap {
        return Err(Error::CapExceeded {
            n: spec.n,
            cap: opts.cap,
        });
    }
    Ok(())
}

/// `ψ(θ, n) = (1/n²) log Z`.
pub fn pressure_exact(spec: &ModelSpec, theta: &Theta, convention: Convention) -> Result<f64> {
    pressure_exact_with(spec, theta, convention, &ExactOptions::default())
}

pub fn pressure_exact_with(
    spec: &ModelSpec,
    theta: &Theta,
    convention: Convention,
    opts: &ExactOptions,
) -> Result<f64> {
    check_cap(spec, opts)?;
    let window = truncation_window(spec, theta)?;
    let eig = pressure_in_window(spec, &theta.values, &window, opts.grid_nodes)?;
    let n2 = (spec.n * spec.n) as f64;
    Ok(eig + log_volume_constant(spec.n, convention) / n2)
}

/// Eigenvalue-convention pressure on a fixed window.
fn pressure_in_window(spec: &ModelSpec, theta: &[f64], window: &Window, grid_nodes: usize) -> Result<f64> {
    let (table, _) = recurrence_unchecked(spec, theta, spec.n, window, grid_nodes)?;
    let n2 = (spec.n * spec.n) as f64;
    Ok(log_partition_eigen(&table, spec.n)? / n2)
}

/// Exact eigenvalue correlation functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrelationDensity {
    OnePoint { density: GridDensity },
    TwoPoint { nodes: Vec<f64>, values: Vec<Vec<f64>> },
}

/// `u_1(x) = (1/n) Σ_{l<n} P_l(x)² e^{-n p(x)} / h_l` on the table's grid.
pub fn one_point_density(table: &RecurrenceTable, spec: &ModelSpec, theta: &Theta) -> Result<CorrelationDensity> {
    spec.check_theta(theta)?;
    let p = spec.potential_at(theta)?;
    let grid = Discretized::new(&p, spec.n, &table.window, table.grid_nodes);
    let nf = spec.n as f64;
    let values: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&x| {
            let w = (-nf * (p.eval(x) - table.window.shift)).exp();
            let k: f64 = table.orthonormal_at(x, spec.n).iter().map(|q| q * q).sum();
            k * w / nf
        })
        .collect();
    let density = GridDensity::generic(grid.nodes, grid.quad, values, (table.window.lo, table.window.hi))?;
    Ok(CorrelationDensity::OnePoint { density })
}

/// `u_2(x, y) = [K(x,x)K(y,y) − K(x,y)²] w(x) w(y) / (n(n−1))` at the given points.
pub fn two_point_density(
    table: &RecurrenceTable,
    spec: &ModelSpec,
    theta: &Theta,
    points: &[f64],
) -> Result<CorrelationDensity> {
    if spec.n < 2 {
        return Err(Error::InvalidConfig("two-point density needs n ≥ 2".into()));
    }
    let p = spec.potential_at(theta)?;
    let nf = spec.n as f64;
    let basis: Vec<Vec<f64>> = points.iter().map(|&x| table.orthonormal_at(x, spec.n)).collect();
    let w: Vec<f64> = points
        .iter()
        .map(|&x| {
            if spec.support.contains(x) {
                (-nf * (p.eval(x) - table.window.shift)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let kern = |a: usize, b: usize| -> f64 { basis[a].iter().zip(&basis[b]).map(|(u, v)| u * v).sum() };
    let diag: Vec<f64> = (0..points.len()).map(|a| kern(a, a)).collect();
    let values = (0..points.len())
        .map(|a| {
            (0..points.len())
                .map(|b| {
                    let kab = kern(a, b);
                    (diag[a] * diag[b] - kab * kab) * w[a] * w[b] / (nf * (nf - 1.0))
                })
                .collect()
        })
        .collect();
    Ok(CorrelationDensity::TwoPoint {
        nodes: points.to_vec(),
        values,
    })
}

/// Exact moments of the trace vector `(Tr f_1, …, Tr f_m)`.
#[derive(Debug, Clone)]
pub struct TraceMoments {
    /// `E Tr f_i`
    pub mean: Vec<f64>,
    /// `Cov(Tr f_i, Tr f_j)`
    pub cov: DMatrix<f64>,
    /// Third joint cumulants `κ(Tr f_i, Tr f_j, Tr f_k)`.
    pub third: Tensor3,
}

/// Trace cumulants from the projection kernel: with `F_lm = ∫ f q_l q_m w`,
/// `E Tr f = tr F`, `Cov = tr(fgK) − tr(FG)` and the third cumulant is
/// `tr(fghK) − Σ_cyc tr((fg)H) + tr(FGH) + tr(FHG)`.
pub fn trace_moments_exact(spec: &ModelSpec, theta: &Theta, fs: &[Polynomial]) -> Result<TraceMoments> {
    check_cap(spec, &ExactOptions::default())?;
    spec.check_theta(theta)?;
    let window = truncation_window(spec, theta)?;
    let (table, grid) = recurrence_unchecked(spec, &theta.values, spec.n, &window, DEFAULT_GRID_NODES)?;
    let n = spec.n;
    let m = fs.len();
    let basis: Vec<Vec<f64>> = grid.nodes.iter().map(|&x| table.orthonormal_at(x, n)).collect();
    let fvals: Vec<Vec<f64>> = fs
        .iter()
        .map(|f| grid.nodes.iter().map(|&x| f.eval(x)).collect())
        .collect();
    let project = |g: &dyn Fn(usize) -> f64| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, n);
        for (k, q) in basis.iter().enumerate() {
            let wk = grid.mass[k] * g(k);
            if wk == 0.0 {
                continue;
            }
            for a in 0..n {
                let qa = wk * q[a];
                for b in 0..=a {
                    out[(a, b)] += qa * q[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                out[(b, a)] = out[(a, b)];
            }
        }
        out
    };
    let single: Vec<DMatrix<f64>> = (0..m).map(|i| project(&|k| fvals[i][k])).collect();
    let mut pair = vec![vec![DMatrix::zeros(0, 0); m]; m];
    for i in 0..m {
        for j in i..m {
            let pm = project(&|k| fvals[i][k] * fvals[j][k]);
            pair[j][i] = pm.clone();
            pair[i][j] = pm;
        }
    }
    let trace_prod = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 { a.component_mul(&b.transpose()).sum() };
    let mean: Vec<f64> = single.iter().map(|f| f.trace()).collect();
    let cov = DMatrix::from_fn(m, m, |i, j| pair[i][j].trace() - trace_prod(&single[i], &single[j]));
    let mut third = Tensor3::zeros(m);
    for i in 0..m {
        for j in i..m {
            for k in j..m {
                let triple: f64 = (0..grid.nodes.len())
                    .map(|x| {
                        let kx: f64 = basis[x].iter().map(|q| q * q).sum();
                        grid.mass[x] * fvals[i][x] * fvals[j][x] * fvals[k][x] * kx
                    })
                    .sum();
                let v = triple
                    - trace_prod(&pair[i][j], &single[k])
                    - trace_prod(&pair[i][k], &single[j])
                    - trace_prod(&pair[j][k], &single[i])
                    + (&single[i] * &single[j] * &single[k]).trace()
                    + (&single[i] * &single[k] * &single[j]).trace();
                for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                    third.set(a, b, c, v);
                }
            }
        }
    }
    Ok(TraceMoments { mean, cov, third })
}

/// `E Tr f` under the exact eigenvalue law.
pub fn expect_trace_exact(spec: &ModelSpec, theta: &Theta, f: &Polynomial) -> Result<f64> {
    let table = build_recurrence(spec, theta, spec.n)?;
    let CorrelationDensity::OnePoint { density } = one_point_density(&table, spec, theta)? else {
        unreachable!()
    };
    Ok(spec.n as f64 * density.integrate(|x| f.eval(x)))
}

/// Signed offsets in units of the step, one entry per parameter.
type Offset = Vec<i64>;

fn stencil_offsets(m: usize, order: usize, scales: &[i64]) -> Vec<(Vec<usize>, i64, Vec<(Offset, f64)>)> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; order];
    loop {
        if idx.windows(2).all(|w| w[0] <= w[1]) {
            for &s in scales {
                let mut terms = Vec::with_capacity(1 << order);
                for mask in 0..(1u32 << order) {
                    let mut off = vec![0i64; m];
                    let mut sign = 1.0;
                    for (bit, &i) in idx.iter().enumerate() {
                        if (mask >> bit) & 1 == 1 {
                            off[i] -= s;
                            sign = -sign;
                        } else {
                            off[i] += s;
                        }
                    }
                    terms.push((off, sign));
                }
                out.push((idx.clone(), s, terms));
            }
        }
        // Advance the multi-index.
        let mut pos = order;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m {
                for q in pos + 1..order {
                    idx[q] = 0;
                }
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Symmetric derivative tensor of `order` 2 or 3 of the pressure, entries
/// indexed by sorted multi-indices.
fn pressure_derivatives(
    spec: &ModelSpec,
    theta: &Theta,
    order: usize,
    convention: Convention,
    opts: &ExactOptions,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    check_cap(spec, opts)?;
    spec.check_theta(theta)?;
    let m = spec.dim();
    if m == 0 {
        return Ok(BTreeMap::new());
    }
    let h = if order == 2 { opts.step2 } else { opts.step3 };
    let scales: &[i64] = if opts.richardson { &[1, 2] } else { &[1] };
    let stencils = stencil_offsets(m, order, scales);
    let points: BTreeSet<Offset> = stencils
        .iter()
        .flat_map(|(_, _, terms)| terms.iter().map(|(o, _)| o.clone()))
        .collect();
    for off in &points {
        for (i, (&o, &[lo, hi])) in off.iter().zip(&spec.theta_box).enumerate() {
            let t = theta.values[i] + o as f64 * h;
            if !(t > lo && t < hi) {
                return Err(Error::StepSize {
                    coordinate: i,
                    step: h,
                });
            }
        }
    }
    let window = truncation_window(spec, theta)?;
    let constant = log_volume_constant(spec.n, convention) / (spec.n * spec.n) as f64;
    let points: Vec<Offset> = points.into_iter().collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|off| {
            let th: Vec<f64> = theta
                .values
                .iter()
                .zip(off)
                .map(|(&t, &o)| t + o as f64 * h)
                .collect();
            pressure_in_window(spec, &th, &window, opts.grid_nodes).map(|v| v + constant)
        })
        .collect::<Result<_>>()?;
    let table: BTreeMap<&Offset, f64> = points.iter().zip(values).collect();
    let mut raw: BTreeMap<(Vec<usize>, i64), f64> = BTreeMap::new();
    for (idx, s, terms) in &stencils {
        let step = 2.0 * h * *s as f64;
        let sum: f64 = terms.iter().map(|(o, sign)| sign * table[o]).sum();
        raw.insert((idx.clone(), *s), sum / step.powi(order as i32));
    }
    let mut out = BTreeMap::new();
    for (idx, _, _) in stencils.iter().filter(|(_, s, _)| *s == 1) {
        let d1 = raw[&(idx.clone(), 1)];
        let v = if opts.richardson {
            let d2 = raw[&(idx.clone(), 2)];
            (4.0 * d1 - d2) / 3.0
        } else {
            d1
        };
        out.insert(idx.clone(), v);
    }
    Ok(out)
}

fn sorted(mut idx: Vec<usize>) -> Vec<usize> {
    idx.sort_unstable();
    idx
}

/// Hessian of the pressure in a given convention.
pub fn pressure_hessian(spec: &ModelSpec, theta: &Theta, convention: Convention, opts: &ExactOptions) -> Result<DMatrix<f64>> {
    let d = pressure_derivatives(spec, theta, 2, convention, opts)?;
    let m = spec.dim();
    Ok(DMatrix::from_fn(m, m, |i, j| d[&sorted(vec![i, j])]))
}

/// Third derivatives `∂³ψ/∂θ_i∂θ_j∂θ_k` in a given convention.
pub fn pressure_third(spec: &ModelSpec, theta: &Theta, convention: Convention, opts: &ExactOptions) -> Result<Tensor3> {
    let d = pressure_derivatives(spec, theta, 3, convention, opts)?;
    Ok(Tensor3::from_fn(spec.dim(), |i, j, k| d[&sorted(vec![i, j, k])]))
}

/// `g_ij = ∂²ψ/∂θ_i∂θ_j` by central differences of the pressure.
pub fn metric_exact(spec: &ModelSpec, theta: &Theta) -> Result<DMatrix<f64>> {
    pressure_hessian(spec, theta, Convention::Eigenvalue, &ExactOptions::default())
}

/// `∂_k g_ij` by central differences of the pressure.
pub fn metric_derivative_exact(spec: &ModelSpec, theta: &Theta) -> Result<Tensor3> {
    pressure_third(spec, theta, Convention::Eigenvalue, &ExactOptions::default())
}

/// `Γ^{(α)}_{ijk} = ((1−α)/2) ∂³ψ/∂θ_i∂θ_j∂θ_k`.
pub fn connection_exact(spec: &ModelSpec, theta: &Theta, alpha: f64) -> Result<Tensor3> {
    check_alpha(alpha)?;
    Ok(metric_derivative_exact(spec, theta)?.scale(0.5 * (1.0 - alpha)))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha = {alpha} outside [-1, 1]")));
    }
    Ok(())
}
