use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{chain_rng, BatchSource, SampleBatch};
use crate::error::{Error, Result};
use crate::model::{EigenvalueConfig, ModelSpec, Theta};

const BLOCK: usize = 1000;

/// Exact draws from the density proportional to `exp(-n Tr (A − μ)² / (2σ²))`.
///
/// Diagonal entries are `N(μ, σ²/n)`; real and imaginary parts of each
/// off-diagonal entry are `N(0, σ²/(2n))`. Draws come in blocks of 1000,
/// each block with its own random stream, and each block counts as a chain.
pub fn sample_gue_direct(n: usize, mu: f64, sigma: f64, count: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidConfig("n and count must be positive".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!("need finite μ and σ > 0, got ({mu}, {sigma})")));
    }
    let sd_diag = sigma / (n as f64).sqrt();
    let sd_off = sigma / (2.0 * n as f64).sqrt();
    let blocks = count.div_ceil(BLOCK);
    let chains: Vec<Vec<EigenvalueConfig>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = chain_rng(seed, b as u64);
            let size = BLOCK.min(count - b * BLOCK);
            (0..size)
                .map(|_| {
                    let mut a = DMatrix::<Complex<f64>>::zeros(n, n);
                    for i in 0..n {
                        let d: f64 = rng.sample(StandardNormal);
                        a[(i, i)] = Complex::new(mu + sd_diag * d, 0.0);
                        for j in (i + 1)..n {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            let z = Complex::new(sd_off * re, sd_off * im);
                            a[(i, j)] = z;
                            a[(j, i)] = z.conj();
                        }
                    }
                    let eig = SymmetricEigen::new(a);
                    EigenvalueConfig::new(eig.eigenvalues.iter().copied().collect())
                })
                .collect()
        })
        .collect();
    let chain_lengths: Vec<usize> = chains.iter().map(Vec::len).collect();
    let s2 = sigma * sigma;
    let theta = Theta::new(vec![-mu / s2, 1.0 / (2.0 * s2)]);
    let mut spec = ModelSpec::gue_chart(n);
    for (bx, &t) in spec.theta_box.iter_mut().zip(&theta.values) {
        bx[0] = bx[0].min(t - 1.0);
        bx[1] = bx[1].max(t + 1.0);
    }
    spec.theta_box[1][0] = 0.0;
    Ok(SampleBatch::new(
        chains.into_iter().flatten().collect(),
        chain_lengths.clone(),
        vec![1.0; chain_lengths.len()],
        vec![0.0; chain_lengths.len()],
        BatchSource {
            method: "gue-direct".into(),
            spec,
            theta,
            sampler: None,
        },
    ))
}
