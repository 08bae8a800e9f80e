//! Pressure by thermodynamic integration from a solvable reference potential.

use serde::{Deserialize, Serialize};

use super::{sample_streams, stats::Estimate, SamplerConfig};
use crate::error::Result;
use crate::model::{ModelSpec, Support, Theta};
use crate::poly::Polynomial;
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoOptions {
    /// Gauss–Legendre nodes along the interpolation path.
    pub nodes: usize,
}

impl Default for ThermoOptions {
    fn default() -> Self {
        ThermoOptions { nodes: 8 }
    }
}

fn log_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Reference potential `c x²` (full line) or `c x` (half line), with `c`
/// matched to the one-particle Gibbs law of `p`, and its exact
/// eigenvalue-convention pressure.
fn reference(p: &Polynomial, n: usize, support: Support) -> (Polynomial, f64) {
    let (lo, hi) = match support {
        Support::Full => (-30.0, 30.0),
        Support::Positive => (0.0, 60.0),
    };
    let rule = quad::gauss_legendre(2000).mapped(lo, hi);
    let pmin = rule.nodes.iter().map(|&x| p.eval(x)).fold(f64::INFINITY, f64::min);
    let w = |x: f64| (-(p.eval(x) - pmin)).exp();
    let z = rule.integrate(w);
    let m1 = rule.integrate(|x| x * w(x)) / z;
    let m2 = rule.integrate(|x| x * x * w(x)) / z;
    let nf = n as f64;
    let mut log_z = log_factorial(n);
    match support {
        Support::Full => {
            let c = 1.0 / (2.0 * (m2 - m1 * m1));
            let a = nf * c;
            for l in 0..n {
                log_z += 0.5 * (std::f64::consts::PI / a).ln() + log_factorial(l) - l as f64 * (2.0 * a).ln();
            }
            (Polynomial::monomial(2, c), log_z / (nf * nf))
        }
        Support::Positive => {
            let c = 1.0 / m1;
            let a = nf * c;
            for l in 0..n {
                log_z += 2.0 * log_factorial(l) - (2 * l + 1) as f64 * a.ln();
            }
            (Polynomial::monomial(1, c), log_z / (nf * nf))
        }
    }
}

/// Eigenvalue-convention pressure along `p_s = (1−s) p_ref + s p_θ`, using
/// `dψ_s/ds = −(1/n) E_s Tr(p_θ − p_ref)`.
pub fn pressure_mcmc(spec: &ModelSpec, theta: &Theta, cfg: &SamplerConfig, opts: &ThermoOptions) -> Result<Estimate> {
    let p = spec.potential_at(theta)?;
    let (p_ref, psi_ref) = reference(&p, spec.n, spec.support);
    let diff = &p - &p_ref;
    let rule = quad::gauss_legendre(opts.nodes).mapped(0.0, 1.0);
    let nf = spec.n as f64;
    let mut value = psi_ref;
    let mut var = 0.0;
    for (k, (&s, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let path = ModelSpec {
            base: &p_ref.scale(1.0 - s) + &p.scale(s),
            perturbations: vec![],
            theta_box: vec![],
            ..spec.clone()
        };
        let batch = sample_streams(&path, &Theta::empty(), cfg, (k * cfg.chains) as u64 + 1_000_000)?;
        let t: Vec<f64> = batch.traces(&diff).iter().map(|v| v / nf).collect();
        let e = batch.mean_of(&t)?;
        value -= w * e.value;
        var += (w * e.stderr).powi(2);
    }
    Ok(Estimate {
        value,
        stderr: var.sqrt(),
        autocorrelation_fallback: cfg.chains < 2,
    })
}
