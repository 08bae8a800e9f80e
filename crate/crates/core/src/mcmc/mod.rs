//! Monte-Carlo sampling of the eigenvalue Coulomb gas.

mod gue;
pub mod stats;
mod thermo;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{trace_statistic, EigenvalueConfig, ModelSpec, Support, Theta};
use crate::poly::Polynomial;

pub use gue::sample_gue_direct;
pub use stats::Estimate;
pub use thermo::{pressure_mcmc, ThermoOptions};

/// Sweeps between proposal-scale updates during burn-in.
const ADAPT_INTERVAL: usize = 50;
const TARGET_ACCEPTANCE: (f64, f64) = (0.30, 0.45);
const MIN_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_chains")]
    pub chains: usize,
    /// Sweeps per chain, burn-in included.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Defaults to 20% of `steps`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_scale")]
    pub proposal_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
}

fn default_chains() -> usize {
    4
}
fn default_steps() -> usize {
    20_000
}
fn default_scale() -> f64 {
    0.2
}
fn default_thinning() -> usize {
    1
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: default_chains(),
            steps: default_steps(),
            burn_in: None,
            proposal_scale: default_scale(),
            seed: 0,
            thinning: default_thinning(),
        }
    }
}

impl SamplerConfig {
    pub fn new(chains: usize, steps: usize, seed: u64) -> Self {
        SamplerConfig {
            chains,
            steps,
            seed,
            ..Default::default()
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.steps / 5)
    }

    /// Copy with every default written out.
    pub fn materialized(&self) -> SamplerConfig {
        SamplerConfig {
            burn_in: Some(self.burn_in()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::config("sampler.chains", "must be at least 1"));
        }
        if self.thinning == 0 {
            return Err(Error::config("sampler.thinning", "must be at least 1"));
        }
        if self.burn_in() >= self.steps {
            return Err(Error::config("sampler.burn_in", "must be smaller than sampler.steps"));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::config("sampler.proposal_scale", "must be positive"));
        }
        Ok(())
    }
}

/// How a batch was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSource {
    pub method: String,
    pub spec: ModelSpec,
    pub theta: Theta,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
}

/// Retained eigenvalue draws, stored chain after chain.
#[derive(Debug, Serialize, Deserialize)]
pub struct SampleBatch {
    pub configs: Vec<EigenvalueConfig>,
    pub chain_lengths: Vec<usize>,
    pub acceptance: Vec<f64>,
    pub proposal_scales: Vec<f64>,
    pub source: BatchSource,
    #[serde(skip)]
    trace_cache: Mutex<BTreeMap<String, Arc<Vec<f64>>>>,
}

impl Clone for SampleBatch {
    fn clone(&self) -> Self {
        SampleBatch {
            configs: self.configs.clone(),
            chain_lengths: self.chain_lengths.clone(),
            acceptance: self.acceptance.clone(),
            proposal_scales: self.proposal_scales.clone(),
            source: self.source.clone(),
            trace_cache: Mutex::new(self.trace_cache.lock().unwrap().clone()),
        }
    }
}

impl SampleBatch {
    pub(crate) fn new(
        configs: Vec<EigenvalueConfig>,
        chain_lengths: Vec<usize>,
        acceptance: Vec<f64>,
        proposal_scales: Vec<f64>,
        source: BatchSource,
    ) -> Self {
        let batch = SampleBatch {
            configs,
            chain_lengths,
            acceptance,
            proposal_scales,
            source,
            trace_cache: Mutex::new(BTreeMap::new()),
        };
        let spec = &batch.source.spec;
        for f in spec.perturbations.iter().chain(std::iter::once(&spec.base)) {
            batch.traces(f);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn n(&self) -> usize {
        self.source.spec.n
    }

    /// `Tr f` for every retained configuration, cached per polynomial.
    pub fn traces(&self, f: &Polynomial) -> Arc<Vec<f64>> {
        let key = serde_json::to_string(f).expect("polynomials serialize");
        if let Some(v) = self.trace_cache.lock().unwrap().get(&key) {
            return Arc::clone(v);
        }
        let values = Arc::new(self.configs.iter().map(|c| trace_statistic(c, f)).collect::<Vec<_>>());
        self.trace_cache
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(values)
            .clone()
    }

    pub fn cached_polynomials(&self) -> usize {
        self.trace_cache.lock().unwrap().len()
    }

    /// Mean of a per-configuration statistic with its standard error.
    pub fn mean_of(&self, values: &[f64]) -> Result<Estimate> {
        batch_mean_and_stderr(self, values)
    }

    /// Chain, position and eigenvalues, one row per retained configuration.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let n = self.n();
        let header: Vec<String> = ["chain".to_string(), "step".to_string()]
            .into_iter()
            .chain((1..=n).map(|i| format!("lambda_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let mut idx = 0;
        for (chain, &len) in self.chain_lengths.iter().enumerate() {
            for step in 0..len {
                let row: Vec<String> = self.configs[idx].lambdas().iter().map(|x| format!("{x:e}")).collect();
                writeln!(out, "{chain},{step},{}", row.join(","))?;
                idx += 1;
            }
        }
        Ok(())
    }

    /// Everything except the draws.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "source": self.source,
            "chain_lengths": self.chain_lengths,
            "acceptance": self.acceptance,
            "proposal_scales": self.proposal_scales,
        })
    }
}

/// Mean over all retained draws and its batch-means standard error.
pub fn batch_mean_and_stderr(batch: &SampleBatch, values: &[f64]) -> Result<Estimate> {
    stats::chained_mean(values, &batch.chain_lengths)
}

/// Per-chain random stream.
pub(crate) fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct ChainResult {
    draws: Vec<EigenvalueConfig>,
    acceptance: f64,
    scale: f64,
}

fn initial_configuration(p: &Polynomial, n: usize, support: Support) -> Vec<f64> {
    // Centre at the sampled minimum of p, spread over a unit interval.
    let (lo, hi) = match support {
        Support::Full => (-10.0, 10.0),
        Support::Positive => (0.0, 10.0),
    };
    let centre = (0..=4000)
        .map(|i| lo + (hi - lo) * i as f64 / 4000.0)
        .min_by(|a, b| p.eval(*a).total_cmp(&p.eval(*b)))
        .unwrap_or(0.0);
    (0..n)
        .map(|i| {
            let x = centre + (i as f64 + 0.5) / n as f64 - 0.5;
            match support {
                Support::Full => x,
                Support::Positive => x.abs().max(1e-3 * (i as f64 + 1.0)),
            }
        })
        .collect()
}

fn run_chain(p: &Polynomial, n: usize, support: Support, cfg: &SamplerConfig, stream: u64) -> ChainResult {
    let mut rng = chain_rng(cfg.seed, stream);
    let mut lam = initial_configuration(p, n, support);
    let nf = n as f64;
    let mut scale = cfg.proposal_scale;
    let burn = cfg.burn_in();
    let mut window_accepted = 0usize;
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut draws = Vec::with_capacity((cfg.steps - burn) / cfg.thinning + 1);
    for sweep in 0..cfg.steps {
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let mut y = lam[i] + scale * z;
            if support == Support::Positive && y < 0.0 {
                y = -y;
            }
            let x = lam[i];
            let mut delta = -nf * (p.eval(y) - p.eval(x));
            let mut coincident = false;
            for (j, &l) in lam.iter().enumerate() {
                if j != i {
                    let dy = (y - l).abs();
                    if dy == 0.0 {
                        coincident = true;
                        break;
                    }
                    delta += 2.0 * (dy.ln() - (x - l).abs().ln());
                }
            }
            let u: f64 = rng.random();
            let accept = !coincident && u.ln() < delta;
            if accept {
                lam[i] = y;
            }
            if sweep < burn {
                window_accepted += accept as usize;
            } else {
                accepted += accept as usize;
                proposed += 1;
            }
        }
        if sweep < burn && (sweep + 1) % ADAPT_INTERVAL == 0 {
            let rate = window_accepted as f64 / (ADAPT_INTERVAL * n) as f64;
            if rate < TARGET_ACCEPTANCE.0 {
                scale *= 0.8;
            } else if rate > TARGET_ACCEPTANCE.1 {
                scale *= 1.25;
            }
            window_accepted = 0;
        }
        if sweep >= burn && (sweep - burn) % cfg.thinning == 0 {
            draws.push(EigenvalueConfig::new(lam.clone()));
        }
    }
    ChainResult {
        draws,
        acceptance: accepted as f64 / proposed.max(1) as f64,
        scale,
    }
}

/// Metropolis-within-Gibbs over eigenvalue coordinates.
pub fn sample(spec: &ModelSpec, theta: &Theta, cfg: &SamplerConfig) -> Result<SampleBatch> {
    sample_streams(spec, theta, cfg, 0)
}

/// As [`sample`], with chain `c` drawing from stream `stream_base + c`.
pub(crate) fn sample_streams(spec: &ModelSpec, theta: &Theta, cfg: &SamplerConfig, stream_base: u64) -> Result<SampleBatch> {
    cfg.validate()?;
    let p = spec.potential_at(theta)?;
    let results: Vec<ChainResult> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&p, spec.n, spec.support, cfg, stream_base + c as u64))
        .collect();
    if let Some((c, r)) = results.iter().enumerate().find(|(_, r)| r.acceptance < MIN_ACCEPTANCE) {
        return Err(Error::Sampler(format!(
            "chain {c} accepted {:.3}% of proposals; lower sampler.proposal_scale",
            100.0 * r.acceptance
        )));
    }
    let chain_lengths = results.iter().map(|r| r.draws.len()).collect();
    let acceptance = results.iter().map(|r| r.acceptance).collect();
    let scales = results.iter().map(|r| r.scale).collect();
    let configs = results.into_iter().flat_map(|r| r.draws).collect();
    Ok(SampleBatch::new(
        configs,
        chain_lengths,
        acceptance,
        scales,
        BatchSource {
            method: "coulomb-gas".into(),
            spec: spec.clone(),
            theta: theta.clone(),
            sampler: Some(cfg.materialized()),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(n: usize) -> ModelSpec {
        ModelSpec::new(Polynomial::monomial(2, 1.0), vec![], vec![], n, Support::Full).unwrap()
    }

    #[test]
    fn single_eigenvalue_gaussian_moments() {
        let spec = quadratic(1);
        let batch = sample(&spec, &Theta::empty(), &SamplerConfig::new(4, 100_000, 11)).unwrap();
        let xs = batch.traces(&Polynomial::monomial(1, 1.0));
        let mean = batch.mean_of(&xs).unwrap();
        assert!(mean.within(0.0, 3.0), "{mean:?}");
        let var = batch.mean_of(&stats::centered_product(&[&xs, &xs])).unwrap();
        assert!(var.within(0.5, 3.0), "{var:?}");
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = quadratic(3);
        let cfg = SamplerConfig::new(2, 2000, 5);
        let a = sample(&spec, &Theta::empty(), &cfg).unwrap();
        let b = sample(&spec, &Theta::empty(), &cfg).unwrap();
        assert_eq!(a.configs, b.configs);
        assert_eq!(a.acceptance, b.acceptance);
        let c = sample(&spec, &Theta::empty(), &SamplerConfig::new(2, 2000, 6)).unwrap();
        assert_ne!(a.configs, c.configs);
    }

    #[test]
    fn positive_support_stays_positive() {
        let spec = ModelSpec::lue_chart(4);
        let batch = sample(&spec, &Theta::new(vec![1.0]), &SamplerConfig::new(2, 3000, 1)).unwrap();
        assert!(batch.configs.iter().all(|c| c.lambdas()[0] >= 0.0));
    }

    #[test]
    fn acceptance_is_tuned_into_band() {
        let spec = quadratic(6);
        let batch = sample(&spec, &Theta::empty(), &SamplerConfig::new(2, 5000, 2)).unwrap();
        for a in &batch.acceptance {
            assert!(*a > 0.2 && *a < 0.55, "{a}");
        }
    }

    #[test]
    fn pathological_scale_is_reported() {
        let spec = quadratic(4);
        let cfg = SamplerConfig {
            proposal_scale: 1e6,
            burn_in: Some(1),
            ..SamplerConfig::new(1, 200, 3)
        };
        assert!(matches!(sample(&spec, &Theta::empty(), &cfg), Err(Error::Sampler(_))));
    }

    #[test]
    fn trace_cache_is_prefilled_and_reused() {
        let spec = ModelSpec::gue_chart(2);
        let batch = sample(&spec, &Theta::new(vec![0.0, 0.5]), &SamplerConfig::new(2, 500, 1)).unwrap();
        assert_eq!(batch.cached_polynomials(), 3);
        let a = batch.traces(&Polynomial::monomial(2, 1.0));
        assert_eq!(batch.cached_polynomials(), 3);
        assert_eq!(a.len(), batch.len());
        batch.traces(&Polynomial::monomial(3, 1.0));
        assert_eq!(batch.cached_polynomials(), 4);
    }

    #[test]
    fn csv_export_shape() {
        let spec = quadratic(2);
        let batch = sample(&spec, &Theta::empty(), &SamplerConfig::new(2, 100, 1)).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "chain,step,lambda_1,lambda_2");
        assert_eq!(lines.len(), batch.len() + 1);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SamplerConfig {
            burn_in: Some(10),
            ..SamplerConfig::new(1, 10, 0)
        };
        assert!(cfg.validate().is_err());
    }
}
