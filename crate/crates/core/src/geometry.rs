//! Finite-n information geometry: dual coordinates, Fisher metric,
//! α-connections, Legendre transform and entropy, by the exact engine or by
//! Monte Carlo.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, check_alpha, log_volume_constant, Convention, ExactOptions};
use crate::mcmc::stats::{centered_product, chained_mean, effective_samples};
use crate::mcmc::{self, Estimate, SampleBatch, SamplerConfig, ThermoOptions};
use crate::model::{ModelSpec, ProductModel, Theta};
use crate::poly::Polynomial;
use crate::tensor::{block_diagonal, from_rows, to_rows, Tensor3};

/// α values reported by default.
pub const DEFAULT_ALPHAS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Effective sample count below which metric estimates carry a warning.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Mcmc,
}

/// `η_i = (1/n) E Tr F_i`; the pressure satisfies `∂ψ/∂θ_i = −η_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCoords {
    pub eta: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricEstimate {
    pub fn matrix(&self) -> DMatrix<f64> {
        from_rows(&self.value)
    }

    pub fn stderr_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.stderr)
    }

    fn exact(g: &DMatrix<f64>) -> Self {
        MetricEstimate {
            value: to_rows(g),
            stderr: vec![vec![0.0; g.ncols()]; g.nrows()],
            warnings: vec![],
        }
    }

    /// Largest entry standard error.
    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionEstimate {
    pub alpha: f64,
    pub value: Tensor3,
    pub stderr: Tensor3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub theta: Theta,
    pub method: Method,
    pub convention: Convention,
    pub pressure: Estimate,
    pub eta: DualCoords,
    pub metric: MetricEstimate,
    pub connections: Vec<ConnectionEstimate>,
    pub legendre: Estimate,
    pub entropy: Estimate,
}

fn traces_over(batch: &SampleBatch, fs: &[Polynomial]) -> Vec<Arc<Vec<f64>>> {
    fs.iter().map(|f| batch.traces(f)).collect()
}

/// `η` from the exact one-point density.
pub fn dual_coordinates_exact(spec: &ModelSpec, theta: &Theta) -> Result<DualCoords> {
    let m = spec.dim();
    if m == 0 {
        return Ok(DualCoords { eta: vec![], stderr: vec![] });
    }
    let mom = exact::trace_moments_exact(spec, theta, &spec.perturbations)?;
    let nf = spec.n as f64;
    Ok(DualCoords {
        eta: mom.mean.iter().map(|v| v / nf).collect(),
        stderr: vec![0.0; m],
    })
}

/// `η` as sample means of `(1/n) Tr F_i`.
pub fn dual_coordinates_mcmc(batch: &SampleBatch) -> Result<DualCoords> {
    let spec = &batch.source.spec;
    let nf = spec.n as f64;
    let mut eta = Vec::new();
    let mut stderr = Vec::new();
    for t in traces_over(batch, &spec.perturbations) {
        let scaled: Vec<f64> = t.iter().map(|v| v / nf).collect();
        let e = batch.mean_of(&scaled)?;
        eta.push(e.value);
        stderr.push(e.stderr);
    }
    Ok(DualCoords { eta, stderr })
}

/// `g = ∂²ψ` by finite differences of the exact pressure.
pub fn fisher_metric_exact(spec: &ModelSpec, theta: &Theta) -> Result<MetricEstimate> {
    Ok(MetricEstimate::exact(&exact::metric_exact(spec, theta)?))
}

/// Sample covariance of arbitrary per-draw statistics.
pub fn covariance_of(batch: &SampleBatch, series: &[&[f64]]) -> Result<MetricEstimate> {
    let m = series.len();
    let mut value = vec![vec![0.0; m]; m];
    let mut stderr = vec![vec![0.0; m]; m];
    let mut warnings = Vec::new();
    let mut min_ess = f64::INFINITY;
    for i in 0..m {
        for j in i..m {
            let z = centered_product(&[series[i], series[j]]);
            let e = chained_mean(&z, &batch.chain_lengths)?;
            if i == j {
                min_ess = min_ess.min(effective_samples(series[i], &batch.mean_of(series[i])?));
            }
            value[i][j] = e.value;
            value[j][i] = e.value;
            stderr[i][j] = e.stderr;
            stderr[j][i] = e.stderr;
        }
    }
    if min_ess < MIN_EFFECTIVE_SAMPLES {
        warnings.push(format!(
            "unstable estimate: about {min_ess:.0} effective samples (< {MIN_EFFECTIVE_SAMPLES})"
        ));
    }
    Ok(MetricEstimate { value, stderr, warnings })
}

/// `g_ij = Cov(Tr F_i, Tr F_j)` from Monte-Carlo draws.
pub fn fisher_metric_mcmc(batch: &SampleBatch) -> Result<MetricEstimate> {
    let t = traces_over(batch, &batch.source.spec.perturbations);
    let refs: Vec<&[f64]> = t.iter().map(|v| v.as_slice()).collect();
    covariance_of(batch, &refs)
}

/// Metric in new coordinates `u` with `θ = θ(u)`, `jacobian[a][i] = ∂θ_a/∂u_i`:
/// the covariance of `Σ_a J_ai Tr F_a`.
pub fn fisher_metric_mcmc_pulled_back(batch: &SampleBatch, jacobian: &DMatrix<f64>) -> Result<MetricEstimate> {
    let t = traces_over(batch, &batch.source.spec.perturbations);
    let len = batch.len();
    let series: Vec<Vec<f64>> = (0..jacobian.ncols())
        .map(|i| (0..len).map(|s| (0..t.len()).map(|a| jacobian[(a, i)] * t[a][s]).sum()).collect())
        .collect();
    let refs: Vec<&[f64]> = series.iter().map(|v| v.as_slice()).collect();
    covariance_of(batch, &refs)
}

/// `Jᵀ g J`
pub fn pullback(metric: &DMatrix<f64>, jacobian: &DMatrix<f64>) -> DMatrix<f64> {
    jacobian.transpose() * metric * jacobian
}

/// The discarded inner product `(1/n) E Tr(F_i F_j)`. A diagnostic only; it
/// does not equal `∂²ψ`.
pub fn rejected_inner_product(batch: &SampleBatch) -> Result<MetricEstimate> {
    let fs = &batch.source.spec.perturbations;
    let m = fs.len();
    let nf = batch.n() as f64;
    let mut value = vec![vec![0.0; m]; m];
    let mut stderr = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let prod = &fs[i] * &fs[j];
            let t: Vec<f64> = batch.traces(&prod).iter().map(|v| v / nf).collect();
            let e = batch.mean_of(&t)?;
            value[i][j] = e.value;
            value[j][i] = e.value;
            stderr[i][j] = e.stderr;
            stderr[j][i] = e.stderr;
        }
    }
    Ok(MetricEstimate { value, stderr, warnings: vec![] })
}

pub fn alpha_connection_exact(spec: &ModelSpec, theta: &Theta, alpha: f64) -> Result<ConnectionEstimate> {
    let value = exact::connection_exact(spec, theta, alpha)?;
    let m = value.dim();
    Ok(ConnectionEstimate {
        alpha,
        value,
        stderr: Tensor3::zeros(m),
    })
}

/// `n E[T_i T_j T_k]` with centered traces `T = Tr F − E Tr F`, equal to `−∂³ψ`.
fn centered_third(batch: &SampleBatch) -> Result<(Tensor3, Tensor3)> {
    let t = traces_over(batch, &batch.source.spec.perturbations);
    let m = t.len();
    let nf = batch.n() as f64;
    let mut value = Tensor3::zeros(m);
    let mut stderr = Tensor3::zeros(m);
    for i in 0..m {
        for j in i..m {
            for k in j..m {
                let z = centered_product(&[&t[i], &t[j], &t[k]]);
                let e = chained_mean(&z, &batch.chain_lengths)?;
                for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                    value.set(a, b, c, nf * e.value);
                    stderr.set(a, b, c, nf * e.stderr);
                }
            }
        }
    }
    Ok((value, stderr))
}

/// `Γ^{(α)}_{ijk} = −((1−α)/2) n E[T_i T_j T_k]`.
pub fn alpha_connection_mcmc(batch: &SampleBatch, alpha: f64) -> Result<ConnectionEstimate> {
    check_alpha(alpha)?;
    let (third, se) = centered_third(batch)?;
    let c = 0.5 * (1.0 - alpha);
    Ok(ConnectionEstimate {
        alpha,
        value: third.scale(-c),
        stderr: se.scale(c),
    })
}

/// The unreduced form `(1/n²) E[(∂_i∂_j ℓ + ((1−α)/2) ∂_iℓ ∂_jℓ) ∂_kℓ]` with
/// `∂_iℓ = −n T_i` and `∂_i∂_j ℓ = −n² g_ij`. The first term multiplies the
/// sample mean of `T_k`, which is zero up to rounding after centering.
pub fn alpha_connection_mcmc_full(batch: &SampleBatch, alpha: f64) -> Result<ConnectionEstimate> {
    let reduced = alpha_connection_mcmc(batch, alpha)?;
    let t = traces_over(batch, &batch.source.spec.perturbations);
    let g = fisher_metric_mcmc(batch)?.matrix();
    let nf = batch.n() as f64;
    let mean_t: Vec<f64> = t
        .iter()
        .map(|v| centered_product(&[v]).iter().sum::<f64>() / v.len() as f64)
        .collect();
    let value = Tensor3::from_fn(t.len(), |i, j, k| reduced.value.get(i, j, k) + nf * g[(i, j)] * mean_t[k]);
    Ok(ConnectionEstimate { value, ..reduced })
}

/// `∂_k g_ij − Γ^{(α)}_{kij} − Γ^{(−α)}_{kji}` with Monte-Carlo connections
/// against a supplied `∂g` (for instance from the exact engine), and the
/// standard error of the connection sum.
pub fn duality_residual_mcmc(batch: &SampleBatch, alpha: f64, dg: &Tensor3) -> Result<(Tensor3, Tensor3)> {
    let plus = alpha_connection_mcmc(batch, alpha)?;
    let minus = alpha_connection_mcmc(batch, -alpha)?;
    let (_, se) = centered_third(batch)?;
    let m = dg.dim();
    let value = Tensor3::from_fn(m, |i, j, k| dg.get(k, i, j) - plus.value.get(k, i, j) - minus.value.get(k, j, i));
    Ok((value, Tensor3::from_fn(m, |i, j, k| se.get(k, i, j))))
}

/// `∂g` estimated as `−n E[T_i T_j T_k]` from the draws.
pub fn metric_derivative_mcmc(batch: &SampleBatch) -> Result<(Tensor3, Tensor3)> {
    let (third, se) = centered_third(batch)?;
    Ok((third.scale(-1.0), se))
}

/// `∂_k g_ij − Γ^{(α)}_{kij} − Γ^{(−α)}_{kji}` on the exact path.
pub fn duality_residual_exact(spec: &ModelSpec, theta: &Theta, alpha: f64) -> Result<Tensor3> {
    let dg = exact::metric_derivative_exact(spec, theta)?;
    let plus = exact::connection_exact(spec, theta, alpha)?;
    let minus = exact::connection_exact(spec, theta, -alpha)?;
    Ok(Tensor3::from_fn(dg.dim(), |i, j, k| {
        dg.get(k, i, j) - plus.get(k, i, j) - minus.get(k, j, i)
    }))
}

/// `φ = Σ θ_i η_i + ψ`
pub fn legendre_transform(theta: &Theta, eta: &DualCoords, pressure: &Estimate) -> Estimate {
    let value = theta.values.iter().zip(&eta.eta).map(|(t, e)| t * e).sum::<f64>() + pressure.value;
    let var = theta
        .values
        .iter()
        .zip(&eta.stderr)
        .map(|(t, s)| (t * s).powi(2))
        .sum::<f64>()
        + pressure.stderr.powi(2);
    Estimate {
        value,
        stderr: var.sqrt(),
        autocorrelation_fallback: pressure.autocorrelation_fallback,
    }
}

/// `(1/n) E Tr p_{θ,n} − (1/n) E Tr p` per draw, with `p_{θ,n} = p_θ + ψ`.
pub fn legendre_trace_difference(batch: &SampleBatch, pressure: &Estimate) -> Result<Estimate> {
    let spec = &batch.source.spec;
    let p_theta = spec.potential_at(&batch.source.theta)?;
    let diff = &p_theta - &spec.base;
    let nf = spec.n as f64;
    let t: Vec<f64> = batch.traces(&diff).iter().map(|v| v / nf + pressure.value).collect();
    let e = batch.mean_of(&t)?;
    Ok(Estimate {
        value: e.value,
        stderr: (e.stderr.powi(2) + pressure.stderr.powi(2)).sqrt(),
        autocorrelation_fallback: e.autocorrelation_fallback,
    })
}

/// `H = −[(1/n) E Tr p_θ + ψ]` given `(1/n) E Tr p_θ`.
pub fn entropy(mean_trace_potential: &Estimate, pressure: &Estimate) -> Estimate {
    Estimate {
        value: -(mean_trace_potential.value + pressure.value),
        stderr: (mean_trace_potential.stderr.powi(2) + pressure.stderr.powi(2)).sqrt(),
        autocorrelation_fallback: mean_trace_potential.autocorrelation_fallback || pressure.autocorrelation_fallback,
    }
}

/// All geometric quantities from the exact engine.
pub fn geometry_exact(spec: &ModelSpec, theta: &Theta, convention: Convention, alphas: &[f64]) -> Result<GeometryReport> {
    let psi = Estimate::exact(exact::pressure_exact(spec, theta, convention)?);
    let eta = dual_coordinates_exact(spec, theta)?;
    let metric = fisher_metric_exact(spec, theta)?;
    let connections = if spec.dim() == 0 {
        vec![]
    } else {
        let third = exact::metric_derivative_exact(spec, theta)?;
        alphas
            .iter()
            .map(|&a| {
                check_alpha(a)?;
                Ok(ConnectionEstimate {
                    alpha: a,
                    value: third.scale(0.5 * (1.0 - a)),
                    stderr: Tensor3::zeros(spec.dim()),
                })
            })
            .collect::<Result<_>>()?
    };
    let p_theta = spec.potential_at(theta)?;
    let tr_p = Estimate::exact(exact::expect_trace_exact(spec, theta, &p_theta)? / spec.n as f64);
    Ok(GeometryReport {
        theta: theta.clone(),
        method: Method::Exact,
        convention,
        legendre: legendre_transform(theta, &eta, &psi),
        entropy: entropy(&tr_p, &psi),
        pressure: psi,
        eta,
        metric,
        connections,
    })
}

/// All geometric quantities from Monte Carlo; the pressure comes from
/// thermodynamic integration.
pub fn geometry_mcmc(
    spec: &ModelSpec,
    theta: &Theta,
    convention: Convention,
    alphas: &[f64],
    cfg: &SamplerConfig,
    thermo: &ThermoOptions,
) -> Result<GeometryReport> {
    let batch = mcmc::sample(spec, theta, cfg)?;
    let mut psi = mcmc::pressure_mcmc(spec, theta, cfg, thermo)?;
    psi.value += log_volume_constant(spec.n, convention) / (spec.n * spec.n) as f64;
    geometry_from_batch(&batch, psi, convention, alphas)
}

/// Geometry from an existing batch and pressure estimate.
pub fn geometry_from_batch(batch: &SampleBatch, pressure: Estimate, convention: Convention, alphas: &[f64]) -> Result<GeometryReport> {
    let spec = &batch.source.spec;
    let theta = &batch.source.theta;
    let eta = dual_coordinates_mcmc(batch)?;
    let metric = fisher_metric_mcmc(batch)?;
    let connections = alphas
        .iter()
        .map(|&a| alpha_connection_mcmc(batch, a))
        .collect::<Result<_>>()?;
    let p_theta = spec.potential_at(theta)?;
    let nf = spec.n as f64;
    let tr: Vec<f64> = batch.traces(&p_theta).iter().map(|v| v / nf).collect();
    let tr_p = batch.mean_of(&tr)?;
    Ok(GeometryReport {
        theta: theta.clone(),
        method: Method::Mcmc,
        convention,
        legendre: legendre_transform(theta, &eta, &pressure),
        entropy: entropy(&tr_p, &pressure),
        pressure,
        eta,
        metric,
        connections,
    })
}

/// `θ = (−μ/σ², 1/(2σ²))` on the GUE chart.
pub fn gue_theta(mu: f64, sigma: f64) -> Theta {
    let s2 = sigma * sigma;
    Theta::new(vec![-mu / s2, 1.0 / (2.0 * s2)])
}

/// `∂θ/∂(μ, σ)` on the GUE chart.
pub fn gue_jacobian(mu: f64, sigma: f64) -> DMatrix<f64> {
    let s2 = sigma * sigma;
    let s3 = s2 * sigma;
    DMatrix::from_row_slice(2, 2, &[-1.0 / s2, 2.0 * mu / s3, 0.0, -1.0 / s3])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GueClosedForms {
    pub theta: Theta,
    /// `θ₁²/(2θ₂) + ½ log(π/(nθ₂))`, the published form.
    pub pressure_published: f64,
    /// `θ₁²/(4θ₂) + ½ log(π/(nθ₂))`, the Gaussian integral.
    pub pressure: f64,
    /// `diag(1/σ², 2/σ²)` in `(μ, σ)`.
    pub metric_mu_sigma: Vec<Vec<f64>>,
    /// `∂²ψ` in `θ`.
    pub metric_theta: Vec<Vec<f64>>,
}

/// Closed forms for `exp(−n Tr (A − μ)²/(2σ²))` under the Hilbert–Schmidt
/// matrix volume.
pub fn gue_closed_forms(mu: f64, sigma: f64, n: usize) -> Result<GueClosedForms> {
    if !(sigma > 0.0) {
        return Err(Error::ParameterDomain {
            coordinate: 1,
            value: sigma,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let theta = gue_theta(mu, sigma);
    let (t1, t2) = (theta.values[0], theta.values[1]);
    let log_term = 0.5 * (std::f64::consts::PI / (n as f64 * t2)).ln();
    let s2 = sigma * sigma;
    Ok(GueClosedForms {
        pressure_published: t1 * t1 / (2.0 * t2) + log_term,
        pressure: t1 * t1 / (4.0 * t2) + log_term,
        metric_mu_sigma: vec![vec![1.0 / s2, 0.0], vec![0.0, 2.0 / s2]],
        metric_theta: vec![
            vec![1.0 / (2.0 * t2), -t1 / (2.0 * t2 * t2)],
            vec![-t1 / (2.0 * t2 * t2), t1 * t1 / (2.0 * t2.powi(3)) + 1.0 / (2.0 * t2 * t2)],
        ],
        theta,
    })
}

/// `1/(2t²)`, the published LUE metric.
pub fn lue_closed_form(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::ParameterDomain {
            coordinate: 0,
            value: t,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(1.0 / (2.0 * t * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub method: Method,
    pub metric: MetricEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log ‖g(n) − g(n_max)‖` against `log n`.
    pub slope: Option<f64>,
}

/// Metric at each `n`; exact up to the engine cap and Monte Carlo beyond.
pub fn convergence_sweep(spec: &ModelSpec, theta: &Theta, ns: &[usize], cfg: &SamplerConfig) -> Result<SweepTable> {
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("n-list must be strictly ascending".into()));
    }
    let cap = ExactOptions::default().cap;
    let rows: Vec<SweepRow> = ns
        .iter()
        .map(|&n| {
            let s = spec.with_n(n);
            if n <= cap {
                Ok(SweepRow { n, method: Method::Exact, metric: fisher_metric_exact(&s, theta)? })
            } else {
                let batch = mcmc::sample(&s, theta, cfg)?;
                Ok(SweepRow { n, method: Method::Mcmc, metric: fisher_metric_mcmc(&batch)? })
            }
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { slope: sweep_slope(&rows), rows })
}

fn sweep_slope(rows: &[SweepRow]) -> Option<f64> {
    let last = rows.last()?.metric.matrix();
    let pts: Vec<(f64, f64)> = rows[..rows.len() - 1]
        .iter()
        .filter_map(|r| {
            let d = (r.metric.matrix() - &last).norm();
            (d > 0.0).then(|| ((r.n as f64).ln(), d.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Pressure of independent components: the sum of component pressures.
pub fn product_pressure_exact(model: &ProductModel, theta: &Theta, convention: Convention) -> Result<f64> {
    model
        .components
        .iter()
        .zip(model.split_theta(theta)?)
        .map(|(c, t)| exact::pressure_exact(c, &t, convention))
        .sum()
}

/// Block-diagonal metric of independent components.
pub fn product_metric_exact(model: &ProductModel, theta: &Theta) -> Result<DMatrix<f64>> {
    let blocks = model
        .components
        .iter()
        .zip(model.split_theta(theta)?)
        .map(|(c, t)| exact::metric_exact(c, &t))
        .collect::<Result<Vec<_>>>()?;
    Ok(block_diagonal(&blocks))
}

/// Draws for each component from disjoint random streams, paired by index.
pub fn sample_product(model: &ProductModel, theta: &Theta, cfg: &SamplerConfig) -> Result<Vec<SampleBatch>> {
    model
        .components
        .iter()
        .zip(model.split_theta(theta)?)
        .enumerate()
        .map(|(c, (spec, t))| mcmc::sample_streams(spec, &t, cfg, 10_000_000 * (c as u64 + 1)))
        .collect()
}

/// Joint covariance of all component trace statistics; cross-blocks estimate
/// zero.
pub fn product_metric_mcmc(batches: &[SampleBatch]) -> Result<MetricEstimate> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Composition("no component batches".into()))?;
    if batches.iter().any(|b| b.chain_lengths != first.chain_lengths) {
        return Err(Error::Composition("component batches differ in shape".into()));
    }
    let series: Vec<Arc<Vec<f64>>> = batches
        .iter()
        .flat_map(|b| traces_over(b, &b.source.spec.perturbations))
        .collect();
    let refs: Vec<&[f64]> = series.iter().map(|v| v.as_slice()).collect();
    covariance_of(first, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compose_independent, Support};
    use crate::tensor::min_eigenvalue;
    use std::f64::consts::PI;

    #[test]
    fn gue_dual_coordinates() {
        let spec = ModelSpec::gue_chart(4);
        let eta = dual_coordinates_exact(&spec, &Theta::new(vec![0.0, 0.5])).unwrap();
        assert!(eta.eta[0].abs() < 1e-12);
        assert!((eta.eta[1] - 1.0).abs() < 1e-10);
        let empty = ModelSpec::new(Polynomial::monomial(2, 1.0), vec![], vec![], 2, Support::Full).unwrap();
        assert!(dual_coordinates_exact(&empty, &Theta::empty()).unwrap().eta.is_empty());
    }

    #[test]
    fn eta_is_minus_pressure_gradient() {
        let spec = ModelSpec::new(
            Polynomial::monomial(4, 1.0),
            vec![Polynomial::monomial(1, 1.0), Polynomial::monomial(2, 1.0)],
            vec![[-1.0, 1.0], [-0.5, 1.0]],
            3,
            Support::Full,
        )
        .unwrap();
        let theta = Theta::new(vec![0.1, 0.2]);
        let eta = dual_coordinates_exact(&spec, &theta).unwrap();
        let h = 1e-4;
        for i in 0..2 {
            let f = |d: f64| exact::pressure_exact(&spec, &theta.shifted(i, d), Convention::Eigenvalue).unwrap();
            let grad = (f(h) - f(-h)) / (2.0 * h);
            assert!((grad + eta.eta[i]).abs() < 1e-6, "{grad} vs {}", eta.eta[i]);
        }
    }

    #[test]
    fn closed_forms() {
        let c = gue_closed_forms(0.0, 1.0, 2).unwrap();
        assert_eq!(c.metric_mu_sigma, vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        assert!((c.pressure - 0.5 * PI.ln()).abs() < 1e-15);
        let c = gue_closed_forms(0.0, 2.0, 2).unwrap();
        assert_eq!(c.metric_mu_sigma, vec![vec![0.25, 0.0], vec![0.0, 0.5]]);
        assert!(gue_closed_forms(0.0, 0.0, 2).is_err());
        assert_eq!(lue_closed_form(1.0).unwrap(), 0.5);
        assert_eq!(lue_closed_form(2.0).unwrap(), 0.125);
        assert!((lue_closed_form(3.0).unwrap() / lue_closed_form(6.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(lue_closed_form(0.0).is_err());
    }

    #[test]
    fn gue_theta_metric_pulls_back_to_mu_sigma() {
        for (mu, sigma) in [(0.0, 1.0), (0.4, 1.5), (-1.0, 0.7)] {
            let c = gue_closed_forms(mu, sigma, 3).unwrap();
            let spec = ModelSpec::gue_chart(3);
            let g = exact::metric_exact(&spec, &c.theta).unwrap();
            let back = pullback(&g, &gue_jacobian(mu, sigma));
            let expected = from_rows(&c.metric_mu_sigma);
            assert!((back - &expected).abs().max() < 1e-6 * expected.abs().max());
            assert!((g - from_rows(&c.metric_theta)).abs().max() < 1e-6);
        }
    }

    #[test]
    fn exact_report_identities() {
        let spec = ModelSpec::gue_chart(2);
        let theta = Theta::new(vec![0.0, 0.5]);
        let r = geometry_exact(&spec, &theta, Convention::Matrix, &DEFAULT_ALPHAS).unwrap();
        assert!((r.legendre.value - (0.5 + 0.5 * PI.ln())).abs() < 1e-9);
        // φ + H = −(1/n) E Tr p = 0 for p = 0.
        assert!((r.legendre.value + r.entropy.value).abs() < 1e-9);
        let one = ModelSpec::new(Polynomial::monomial(2, 1.0), vec![], vec![], 1, Support::Full).unwrap();
        let r = geometry_exact(&one, &Theta::empty(), Convention::Eigenvalue, &DEFAULT_ALPHAS).unwrap();
        assert!((r.entropy.value + 0.5 + 0.5 * PI.ln()).abs() < 1e-10);
        assert!((r.legendre.value - r.pressure.value).abs() < 1e-15);
        let shifted = geometry_exact(&one.with_base_shift(1.3), &Theta::empty(), Convention::Eigenvalue, &[]).unwrap();
        assert!((shifted.entropy.value - r.entropy.value).abs() < 1e-10);
    }

    #[test]
    fn exact_duality_and_flatness() {
        let spec = ModelSpec::new(
            Polynomial::monomial(4, 1.0),
            vec![Polynomial::monomial(1, 1.0), Polynomial::monomial(2, 1.0)],
            vec![[-1.0, 1.0], [-0.5, 1.0]],
            3,
            Support::Full,
        )
        .unwrap();
        let theta = Theta::new(vec![0.1, 0.2]);
        for a in DEFAULT_ALPHAS {
            let r = duality_residual_exact(&spec, &theta, a).unwrap();
            assert!(r.max_abs() < 1e-10);
        }
        assert_eq!(alpha_connection_exact(&spec, &theta, 1.0).unwrap().value.max_abs(), 0.0);
    }

    #[test]
    fn convexity_on_a_grid() {
        let spec = ModelSpec::new(
            Polynomial::monomial(4, 1.0),
            vec![Polynomial::monomial(1, 1.0), Polynomial::monomial(2, 1.0)],
            vec![[-1.0, 1.0], [-0.5, 1.0]],
            3,
            Support::Full,
        )
        .unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let theta = Theta::new(vec![-0.8 + 0.4 * a as f64, -0.4 + 0.3 * b as f64]);
                let g = exact::metric_exact(&spec, &theta).unwrap();
                assert!(min_eigenvalue(&g) >= -1e-8);
            }
        }
    }

    #[test]
    fn mcmc_metric_agrees_with_exact_for_small_model() {
        let spec = ModelSpec::new(
            Polynomial::monomial(4, 1.0),
            vec![Polynomial::monomial(2, 1.0)],
            vec![[-0.5, 1.0]],
            3,
            Support::Full,
        )
        .unwrap();
        let theta = Theta::new(vec![0.0]);
        let batch = mcmc::sample(&spec, &theta, &SamplerConfig::new(4, 40_000, 21)).unwrap();
        let est = fisher_metric_mcmc(&batch).unwrap();
        let g = exact::metric_exact(&spec, &theta).unwrap();
        let diff = (est.value[0][0] - g[(0, 0)]).abs();
        assert!(diff <= (0.05 * g[(0, 0)]).max(3.0 * est.stderr[0][0]), "{est:?} vs {g}");
        let phi = legendre_trace_difference(&batch, &Estimate::exact(0.3)).unwrap();
        let eta = dual_coordinates_mcmc(&batch).unwrap();
        let direct = legendre_transform(&theta, &eta, &Estimate::exact(0.3));
        assert!((phi.value - direct.value).abs() < 1e-12);
    }

    #[test]
    fn product_metric_blocks() {
        let model = compose_independent(&[ModelSpec::gue_chart(3), ModelSpec::gue_chart(3)]).unwrap();
        let theta = Theta::new(vec![0.0, 0.5, 0.0, 0.5]);
        let g = product_metric_exact(&model, &theta).unwrap();
        assert!((g[(2, 2)] - 1.0).abs() < 1e-7 && (g[(3, 3)] - 2.0).abs() < 1e-7);
        assert_eq!(g[(0, 2)], 0.0);
        let psi = product_pressure_exact(&model, &theta, Convention::Matrix).unwrap();
        let single = exact::pressure_exact(&ModelSpec::gue_chart(3), &Theta::new(vec![0.0, 0.5]), Convention::Matrix).unwrap();
        assert!((psi - 2.0 * single).abs() < 1e-12);

        let batches = sample_product(&model, &theta, &SamplerConfig::new(4, 10_000, 3)).unwrap();
        let est = product_metric_mcmc(&batches).unwrap();
        for i in 0..2 {
            for j in 2..4 {
                assert!(est.value[i][j].abs() <= 3.0 * est.stderr[i][j] + 1e-12, "{i}{j}: {est:?}");
            }
        }
    }

    #[test]
    fn convergence_sweep_on_gue_is_flat() {
        let spec = ModelSpec::gue_chart(2);
        let t = convergence_sweep(&spec, &Theta::new(vec![0.0, 0.5]), &[2, 4, 8], &SamplerConfig::default()).unwrap();
        let last = t.rows.last().unwrap().metric.matrix();
        for r in &t.rows {
            assert!((r.metric.matrix() - &last).abs().max() < 1e-6);
        }
        let single = convergence_sweep(&spec, &Theta::new(vec![0.0, 0.5]), &[3], &SamplerConfig::default()).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert!(single.slope.is_none());
    }
}
