//! Statistical harnesses: Cramér–Rao checks over independent observations,
//! fluctuation covariances, loop equations and the free Cramér–Rao limit.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, DEFAULT_CAP};
use crate::freelimit;
use crate::geometry::{self, MetricEstimate};
use crate::mcmc::stats::{centered_product, chained_mean, Estimate};
use crate::mcmc::{self, chain_rng, SampleBatch, SamplerConfig};
use crate::model::{trace_statistic, EigenvalueConfig, ModelSpec, Support, Theta};
use crate::poly::Polynomial;
use crate::tensor::{min_eigenvalue, min_eigenvector, symmetric_pinv, to_rows};

/// Width of every decision band, in standard errors.
pub const DECISION_BAND: f64 = 3.0;
/// Condition number above which the metric inverse is reported as unreliable.
pub const CONDITION_WARNING: f64 = 1e10;

const OBSERVATION_STREAM_BASE: u64 = 40_000_000;
const OBSERVATION_STREAM_STRIDE: u64 = 1_000;
const NOISE_STREAM: u64 = 30_000_000;
const TARGET_STREAM_BASE: u64 = 50_000_000;

/// What the estimator components estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Eta,
    Theta,
}

/// Symmetric estimator `ξ_i(A_1…A_k) = Σ_j f_i(A_j)`, read off as
/// `(1/n) Σ_j Tr f_i(A_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimator {
    pub components: Vec<Polynomial>,
    pub k: usize,
    pub target: Target,
    /// Coordinate estimated by each component; defaults to `0..m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<usize>>,
    /// Standard deviation of independent Gaussian noise added to every
    /// component of every estimate.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub noise_sd: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Estimator {
    /// `η̂_i = (1/k) Σ_j (1/n) Tr F_i(A_j)`.
    pub fn efficient(spec: &ModelSpec, k: usize) -> Self {
        Estimator {
            components: spec.perturbations.iter().map(|f| f.scale(1.0 / k as f64)).collect(),
            k,
            target: Target::Eta,
            coordinates: None,
            noise_sd: 0.0,
        }
    }

    pub fn with_noise(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn coordinates(&self) -> Vec<usize> {
        self.coordinates.clone().unwrap_or_else(|| (0..self.dim()).collect())
    }

    fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Estimator("k must be at least 1".into()));
        }
        let coords = self.coordinates();
        if coords.len() != self.dim() {
            return Err(Error::Estimator(format!(
                "{} coordinates for {} components",
                coords.len(),
                self.dim()
            )));
        }
        if let Some(&bad) = coords.iter().find(|&&c| c >= spec.dim()) {
            return Err(Error::Estimator(format!("coordinate {bad} outside a {}-parameter model", spec.dim())));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Estimator("noise_sd must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// `(1/n) Σ_j Tr f_i(A_j)` for each component, without noise.
pub fn estimate_value(est: &Estimator, observations: &[EigenvalueConfig], n: usize) -> Result<Vec<f64>> {
    if observations.len() != est.k {
        return Err(Error::Estimator(format!(
            "estimator takes {} observations, got {}",
            est.k,
            observations.len()
        )));
    }
    let nf = n as f64;
    Ok(est
        .components
        .iter()
        .map(|f| observations.iter().map(|o| trace_statistic(o, f)).sum::<f64>() / nf)
        .collect())
}

/// `k` independent batches with identical chain layout.
pub fn sample_observations(spec: &ModelSpec, theta: &Theta, k: usize, cfg: &SamplerConfig) -> Result<Vec<SampleBatch>> {
    (0..k as u64)
        .map(|j| mcmc::sample_streams(spec, theta, cfg, OBSERVATION_STREAM_BASE + j * OBSERVATION_STREAM_STRIDE))
        .collect()
}

/// Per-tuple estimates `ξ(A_1^{(s)} … A_k^{(s)})`, noise included.
fn tuple_estimates(est: &Estimator, batches: &[SampleBatch], seed: u64) -> Result<Vec<Vec<f64>>> {
    if batches.len() != est.k {
        return Err(Error::Estimator(format!("{} batches for k = {}", batches.len(), est.k)));
    }
    let lengths = &batches[0].chain_lengths;
    if batches.iter().any(|b| &b.chain_lengths != lengths) {
        return Err(Error::Estimator("observation batches must share a chain layout".into()));
    }
    let nf = batches[0].n() as f64;
    let len = batches[0].len();
    let mut out: Vec<Vec<f64>> = est
        .components
        .iter()
        .map(|f| {
            let traces: Vec<_> = batches.iter().map(|b| b.traces(f)).collect();
            (0..len).map(|s| traces.iter().map(|t| t[s]).sum::<f64>() / nf).collect()
        })
        .collect();
    if est.noise_sd > 0.0 {
        let mut rng = chain_rng(seed, NOISE_STREAM);
        for s in 0..len {
            for comp in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                comp[s] += est.noise_sd * z;
            }
        }
    }
    Ok(out)
}

fn target_values(est: &Estimator, spec: &ModelSpec, theta: &Theta, cfg: &SamplerConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let coords = est.coordinates();
    match est.target {
        Target::Theta => Ok((coords.iter().map(|&c| theta.values[c]).collect(), vec![0.0; coords.len()])),
        Target::Eta => {
            let eta = if spec.n <= DEFAULT_CAP {
                geometry::dual_coordinates_exact(spec, theta)?
            } else {
                let batch = mcmc::sample_streams(spec, theta, cfg, TARGET_STREAM_BASE)?;
                geometry::dual_coordinates_mcmc(&batch)?
            };
            Ok((
                coords.iter().map(|&c| eta.eta[c]).collect(),
                coords.iter().map(|&c| eta.stderr[c]).collect(),
            ))
        }
    }
}

/// Bias per component against the exact (or independently sampled) target.
pub fn bias_from_batches(
    est: &Estimator,
    spec: &ModelSpec,
    theta: &Theta,
    batches: &[SampleBatch],
    cfg: &SamplerConfig,
) -> Result<Vec<Estimate>> {
    est.validate(spec)?;
    let values = tuple_estimates(est, batches, cfg.seed)?;
    let (targets, target_err) = target_values(est, spec, theta, cfg)?;
    values
        .iter()
        .zip(targets.iter().zip(&target_err))
        .map(|(v, (t, te))| {
            let m = chained_mean(v, &batches[0].chain_lengths)?;
            Ok(Estimate {
                value: m.value - t,
                stderr: m.stderr.hypot(*te),
                autocorrelation_fallback: m.autocorrelation_fallback,
            })
        })
        .collect()
}

/// Monte-Carlo bias of each component, with standard errors.
pub fn check_unbiased(est: &Estimator, spec: &ModelSpec, theta: &Theta, cfg: &SamplerConfig) -> Result<Vec<Estimate>> {
    est.validate(spec)?;
    let batches = sample_observations(spec, theta, est.k, cfg)?;
    bias_from_batches(est, spec, theta, &batches, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    BoundHolds,
    BoundViolatedWithinError,
    BoundViolated,
}

impl Verdict {
    pub fn from_slack(slack: &Estimate) -> Self {
        if slack.value >= 0.0 {
            Verdict::BoundHolds
        } else if slack.value >= -DECISION_BAND * slack.stderr {
            Verdict::BoundViolatedWithinError
        } else {
            Verdict::BoundViolated
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CRReport {
    pub k: usize,
    pub target: Target,
    /// `n² Cov(ξ)`
    pub error_cov: MetricEstimate,
    /// Inverse of the metric of `k` independent copies, in target coordinates.
    pub metric_inverse: Vec<Vec<f64>>,
    /// Smallest eigenvalue of `error_cov − metric_inverse`.
    pub psd_slack: Estimate,
    pub verdict: Verdict,
    pub bias: Vec<Estimate>,
    pub unbiased: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Cramér–Rao comparison on pre-sampled observation batches (one per
/// argument of the estimator).
pub fn cramer_rao_from_batches(
    est: &Estimator,
    spec: &ModelSpec,
    theta: &Theta,
    batches: &[SampleBatch],
    cfg: &SamplerConfig,
) -> Result<CRReport> {
    est.validate(spec)?;
    let mut warnings = Vec::new();
    let bias = bias_from_batches(est, spec, theta, batches, cfg)?;
    let unbiased = bias.iter().all(|b| b.within(0.0, DECISION_BAND));
    if !unbiased {
        warnings.push("estimator is biased beyond the decision band; the bound does not apply".into());
    }

    let nf = spec.n as f64;
    let values = tuple_estimates(est, batches, cfg.seed)?;
    let scaled: Vec<Vec<f64>> = values.iter().map(|v| v.iter().map(|x| nf * x).collect()).collect();
    let refs: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
    let error_cov = geometry::covariance_of(&batches[0], &refs)?;
    warnings.extend(error_cov.warnings.iter().cloned());

    let g = if spec.n <= DEFAULT_CAP {
        exact::metric_exact(spec, theta)?
    } else {
        geometry::fisher_metric_mcmc(&batches[0])?.matrix()
    };
    let kf = est.k as f64;
    let full_inverse = match est.target {
        // η = −∂ψ/∂θ, so the metric in η-coordinates is g⁻¹ per copy.
        Target::Eta => &g / kf,
        Target::Theta => {
            let (inv, cond) = symmetric_pinv(&g);
            if cond > CONDITION_WARNING {
                warnings.push(format!("metric condition number {cond:.2e}; using the pseudo-inverse"));
            }
            inv / kf
        }
    };
    let coords = est.coordinates();
    let m = coords.len();
    let bound = DMatrix::from_fn(m, m, |a, b| full_inverse[(coords[a], coords[b])]);
    let diff = error_cov.matrix() - &bound;
    let slack_value = min_eigenvalue(&diff);
    let v = min_eigenvector(&diff);
    // Linearized error of vᵀ E v.
    let projected: Vec<f64> = (0..batches[0].len())
        .map(|s| (0..m).map(|i| v[i] * scaled[i][s]).sum())
        .collect();
    let z = centered_product(&[&projected, &projected]);
    let slack_err = chained_mean(&z, &batches[0].chain_lengths)?.stderr;
    let psd_slack = Estimate {
        value: slack_value,
        stderr: slack_err,
        autocorrelation_fallback: false,
    };
    Ok(CRReport {
        k: est.k,
        target: est.target,
        error_cov,
        metric_inverse: to_rows(&bound),
        verdict: Verdict::from_slack(&psd_slack),
        psd_slack,
        bias,
        unbiased,
        warnings,
    })
}

/// Samples `k` independent streams and runs the Cramér–Rao comparison.
pub fn cramer_rao_check(est: &Estimator, spec: &ModelSpec, theta: &Theta, cfg: &SamplerConfig) -> Result<CRReport> {
    est.validate(spec)?;
    spec.check_theta(theta)?;
    let batches = sample_observations(spec, theta, est.k, cfg)?;
    cramer_rao_from_batches(est, spec, theta, &batches, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationRow {
    pub n: usize,
    pub beta: MetricEstimate,
    /// `g(0, n)` from the exact engine, when within its cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub rows: Vec<FluctuationRow>,
    /// Intercept of a weighted fit of `β̂_ij` against `1/n`.
    pub extrapolated: MetricEstimate,
    /// Slope of the same fit.
    pub trend: MetricEstimate,
}

/// Weighted least squares `y = c + s x`; returns `((c, se_c), (s, se_s))`.
fn weighted_line(xs: &[f64], ys: &[f64], ses: &[f64]) -> ((f64, f64), (f64, f64)) {
    if xs.len() < 2 {
        return ((ys[0], ses[0]), (0.0, f64::INFINITY));
    }
    let w: Vec<f64> = ses.iter().map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1e30 }).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(xs).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(ys).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(xs).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(xs.iter().zip(ys)).map(|(w, (x, y))| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return ((sy / sw, (1.0 / sw).sqrt()), (0.0, f64::INFINITY));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    ((intercept, (sxx / det).sqrt()), (slope, (sw / det).sqrt()))
}

/// Centered covariances of `Tr F_i` for batches drawn at `θ = 0` of specs
/// differing only in `n`.
pub fn fluctuation_from_batches(fs: &[Polynomial], batches: &[SampleBatch]) -> Result<FluctuationReport> {
    if batches.is_empty() {
        return Err(Error::Estimator("no batches".into()));
    }
    let mut rows = Vec::new();
    for batch in batches {
        let traces: Vec<_> = fs.iter().map(|f| batch.traces(f)).collect();
        let refs: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
        let beta = geometry::covariance_of(batch, &refs)?;
        let metric = if batch.n() <= DEFAULT_CAP && !fs.is_empty() {
            let mut spec = batch.source.spec.clone();
            let theta_full = spec.potential_at(&batch.source.theta)?;
            spec.base = theta_full;
            spec.theta_box = fs.iter().map(|_| [-1.0, 1.0]).collect();
            spec.perturbations = fs.to_vec();
            let moments = exact::trace_moments_exact(&spec, &Theta::new(vec![0.0; fs.len()]), fs)?;
            Some(to_rows(&moments.cov))
        } else {
            None
        };
        rows.push(FluctuationRow { n: batch.n(), beta, metric });
    }
    let m = fs.len();
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 / r.n as f64).collect();
    let mut ext = vec![vec![0.0; m]; m];
    let mut ext_se = vec![vec![0.0; m]; m];
    let mut tr = vec![vec![0.0; m]; m];
    let mut tr_se = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let ys: Vec<f64> = rows.iter().map(|r| r.beta.value[i][j]).collect();
            let ses: Vec<f64> = rows.iter().map(|r| r.beta.stderr[i][j]).collect();
            let ((c, sc), (s, ss)) = weighted_line(&xs, &ys, &ses);
            ext[i][j] = c;
            ext_se[i][j] = sc;
            tr[i][j] = s;
            tr_se[i][j] = ss;
        }
    }
    Ok(FluctuationReport {
        rows,
        extrapolated: MetricEstimate { value: ext, stderr: ext_se, warnings: vec![] },
        trend: MetricEstimate { value: tr, stderr: tr_se, warnings: vec![] },
    })
}

/// Fluctuation covariances of the base model (`θ = 0`) across `ns`.
pub fn fluctuation_covariance(spec: &ModelSpec, fs: &[Polynomial], ns: &[usize], cfg: &SamplerConfig) -> Result<FluctuationReport> {
    let zero = Theta::new(vec![0.0; spec.dim()]);
    spec.check_theta(&zero)?;
    let batches = ns
        .iter()
        .map(|&n| mcmc::sample(&spec.with_n(n), &zero, cfg))
        .collect::<Result<Vec<_>>>()?;
    fluctuation_from_batches(fs, &batches)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopResidual {
    pub residual: Estimate,
    /// Largest absolute mean term.
    pub scale: f64,
    /// Means of `n(n−1)E₂[Δφ]`, `−n²E₁[p′φ]`, `nE₁[φ′]`.
    pub terms: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Per-configuration loop statistic
/// `Σ_{i≠j} (φ(λ_i) − φ(λ_j))/(λ_i − λ_j) − n Σ_i p′(λ_i) φ(λ_i) + Σ_i φ′(λ_i)`.
fn loop_terms(cfg: &EigenvalueConfig, dp: &Polynomial, phi: &Polynomial, dphi: &Polynomial, n: f64) -> [f64; 3] {
    let l = cfg.lambdas();
    let vals: Vec<f64> = l.iter().map(|&x| phi.eval(x)).collect();
    let mut pair = 0.0;
    for i in 0..l.len() {
        for j in (i + 1)..l.len() {
            let d = l[i] - l[j];
            pair += if d == 0.0 { dphi.eval(l[i]) } else { (vals[i] - vals[j]) / d };
        }
    }
    let drift: f64 = l.iter().zip(&vals).map(|(&x, v)| dp.eval(x) * v).sum();
    let div: f64 = l.iter().map(|&x| dphi.eval(x)).sum();
    [2.0 * pair, -n * drift, div]
}

/// Monte-Carlo value of `n(n−1)E₂[(φ(t)−φ(s))/(t−s)] − n²E₁[p′φ] + nE₁[φ′]`.
pub fn johansson_residual(spec: &ModelSpec, theta: &Theta, phi: &Polynomial, batch: &SampleBatch) -> Result<LoopResidual> {
    let p = spec.potential_at(theta)?;
    let dp = p.derivative();
    let dphi = phi.derivative();
    let nf = spec.n as f64;
    let per: Vec<[f64; 3]> = batch.configs.iter().map(|c| loop_terms(c, &dp, phi, &dphi, nf)).collect();
    let total: Vec<f64> = per.iter().map(|t| t.iter().sum()).collect();
    let residual = chained_mean(&total, &batch.chain_lengths)?;
    let len = per.len().max(1) as f64;
    let mut terms = [0.0; 3];
    for t in &per {
        for (acc, v) in terms.iter_mut().zip(t) {
            *acc += v / len;
        }
    }
    let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let warning = (spec.support == Support::Positive && phi.eval(0.0) != 0.0)
        .then(|| "φ(0) ≠ 0 on the half line: the wall at 0 contributes a boundary term".to_string());
    Ok(LoopResidual { residual, scale, terms, warning })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeCRRow {
    pub n: usize,
    /// `(1/n) E Tr A`
    pub first_moment: Estimate,
    /// `(1/n) E Tr A²`
    pub second_moment: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeCRTable {
    pub rows: Vec<FreeCRRow>,
    pub free_fisher: f64,
    pub inverse_free_fisher: f64,
    /// `(1/n)E Tr A` is within the decision band of 0 at every `n`.
    pub centered: bool,
    /// `(1/n)E Tr A² ≥ Φ⁻¹` within the decision band at the largest `n`.
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `(1/n)E Tr A²` under the base model against `1/Φ` of its equilibrium measure.
pub fn free_cramer_rao_check(spec: &ModelSpec, ns: &[usize], cfg: &SamplerConfig) -> Result<FreeCRTable> {
    if ns.is_empty() {
        return Err(Error::InvalidConfig("need at least one n".into()));
    }
    let zero = Theta::new(vec![0.0; spec.dim()]);
    spec.check_theta(&zero)?;
    let p = spec.potential_at(&zero)?;
    let q = freelimit::solve_one_cut(&p)?;
    let phi = freelimit::free_fisher(&q.default_grid()?);
    let x = Polynomial::monomial(1, 1.0);
    let x2 = Polynomial::monomial(2, 1.0);
    let mut rows = Vec::new();
    for &n in ns {
        let batch = mcmc::sample(&spec.with_n(n), &zero, cfg)?;
        let nf = n as f64;
        let m1: Vec<f64> = batch.traces(&x).iter().map(|v| v / nf).collect();
        let m2: Vec<f64> = batch.traces(&x2).iter().map(|v| v / nf).collect();
        rows.push(FreeCRRow {
            n,
            first_moment: batch.mean_of(&m1)?,
            second_moment: batch.mean_of(&m2)?,
        });
    }
    let centered = rows.iter().all(|r| r.first_moment.within(0.0, DECISION_BAND));
    let mut warnings = Vec::new();
    if !centered {
        warnings.push("base model is not centered; A is a biased estimator of 0".into());
    }
    let last = rows.iter().max_by_key(|r| r.n).expect("nonempty");
    let holds = last.second_moment.value >= 1.0 / phi - DECISION_BAND * last.second_moment.stderr;
    Ok(FreeCRTable {
        rows,
        free_fisher: phi,
        inverse_free_fisher: 1.0 / phi,
        centered,
        holds,
        warnings,
    })
}
