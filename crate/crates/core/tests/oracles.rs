//! Cross-module checks against independent oracles: closed forms, direct
//! samplers and quadrature of the joint density.

use infogeom::exact::{self, Convention};
use infogeom::freelimit::solve_one_cut;
use infogeom::geometry::{self, gue_theta};
use infogeom::mcmc::{self, sample_gue_direct, SamplerConfig};
use infogeom::model::{ModelSpec, Support, Theta};
use infogeom::poly::Polynomial;

const K: f64 = 3.0;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn quadratic(n: usize, perturbations: Vec<Polynomial>) -> ModelSpec {
    let box_ = vec![[-1.0, 1.0]; perturbations.len()];
    ModelSpec::new(Polynomial::monomial(2, 1.0), perturbations, box_, n, Support::Full).unwrap()
}

#[test]
fn single_eigenvalue_gaussian_moments() {
    let spec = quadratic(1, vec![]);
    let batch = mcmc::sample(&spec, &Theta::empty(), &SamplerConfig::new(4, 25_000, 1)).unwrap();
    let x = batch.traces(&Polynomial::monomial(1, 1.0));
    let m = batch.mean_of(&x).unwrap();
    assert!(m.within(0.0, K), "{m:?}");
    let x2 = batch.traces(&Polynomial::monomial(2, 1.0));
    let v = batch.mean_of(&x2).unwrap();
    assert!(v.within(0.5, K), "{v:?}");
}

#[test]
fn mcmc_second_moment_matches_exact_engine() {
    let spec = ModelSpec::gue_chart(8);
    let theta = gue_theta(0.0, 1.0);
    let x2 = Polynomial::monomial(2, 1.0);
    let exact = exact::expect_trace_exact(&spec, &theta, &x2).unwrap() / 8.0;
    let batch = mcmc::sample(&spec, &theta, &SamplerConfig::new(4, 20_000, 2)).unwrap();
    let vals: Vec<f64> = batch.traces(&x2).iter().map(|t| t / 8.0).collect();
    let m = batch.mean_of(&vals).unwrap();
    assert!(m.within(exact, K), "{m:?} vs {exact}");
    assert!((exact - 1.0).abs() < 1e-8);
}

#[test]
fn different_seeds_agree() {
    let spec = quadratic(4, vec![]);
    let x2 = Polynomial::monomial(2, 1.0);
    let ests: Vec<_> = [10u64, 20]
        .iter()
        .map(|&s| {
            let b = mcmc::sample(&spec, &Theta::empty(), &SamplerConfig::new(4, 10_000, s)).unwrap();
            let t = b.traces(&x2);
            b.mean_of(&t).unwrap()
        })
        .collect();
    let se = (ests[0].stderr.powi(2) + ests[1].stderr.powi(2)).sqrt();
    assert!((ests[0].value - ests[1].value).abs() <= K * se);
}

#[test]
fn two_eigenvalue_histogram_matches_joint_density() {
    // For p = x², n = 2: S = λ₁ + λ₂ ~ N(0, 1/2) and D = λ₂ − λ₁ has density ∝ D² e^{−D²}.
    let spec = quadratic(2, vec![]);
    let batch = mcmc::sample(&spec, &Theta::empty(), &SamplerConfig::new(4, 40_000, 3)).unwrap();
    let s_edges = [-8.0, -0.3, 0.3, 8.0];
    let d_edges = [0.0, 0.8, 1.4, 8.0];
    let s_pdf = |s: f64| (-s * s).exp() / std::f64::consts::PI.sqrt();
    let d_pdf = |d: f64| 4.0 / std::f64::consts::PI.sqrt() * d * d * (-d * d).exp();
    for i in 0..3 {
        for j in 0..3 {
            let target = simpson(s_pdf, s_edges[i], s_edges[i + 1], 2000) * simpson(d_pdf, d_edges[j], d_edges[j + 1], 2000);
            let hits: Vec<f64> = batch
                .configs
                .iter()
                .map(|c| {
                    let l = c.lambdas();
                    let (s, d) = (l[0] + l[1], l[1] - l[0]);
                    let inside = s >= s_edges[i] && s < s_edges[i + 1] && d >= d_edges[j] && d < d_edges[j + 1];
                    f64::from(u8::from(inside))
                })
                .collect();
            let est = batch.mean_of(&hits).unwrap();
            assert!(est.within(target, K), "bin ({i},{j}): {est:?} vs {target}");
        }
    }
}

#[test]
fn half_line_draws_stay_nonnegative() {
    let spec = ModelSpec::lue_chart(5);
    let batch = mcmc::sample(&spec, &Theta::new(vec![1.0]), &SamplerConfig::new(2, 5_000, 4)).unwrap();
    assert!(batch.configs.iter().all(|c| c.lambdas().iter().all(|&x| x >= 0.0)));
}

#[test]
fn direct_gue_moments() {
    let (mu, sigma, n) = (0.4, 1.5, 6);
    let batch = sample_gue_direct(n, mu, sigma, 20_000, 5).unwrap();
    let tr = batch.traces(&Polynomial::monomial(1, 1.0));
    let m: Vec<f64> = tr.iter().map(|t| t / n as f64).collect();
    assert!(batch.mean_of(&m).unwrap().within(mu, K));
    let mean = tr.iter().sum::<f64>() / tr.len() as f64;
    let centred: Vec<f64> = tr.iter().map(|t| (t - mean).powi(2)).collect();
    let var = batch.mean_of(&centred).unwrap();
    assert!(var.within(sigma * sigma, K), "{var:?}");
}

#[test]
fn direct_gue_histogram_follows_equilibrium_measure() {
    let n = 64;
    let batch = sample_gue_direct(n, 0.0, 1.0, 1_500, 6).unwrap();
    let q = solve_one_cut(&Polynomial::monomial(2, 0.5)).unwrap();
    assert!((q.b - 2.0).abs() < 1e-10);
    let bins = 32;
    let width = (q.b - q.a) / bins as f64;
    let total = (batch.len() * n) as f64;
    let mut counts = vec![0usize; bins];
    for c in &batch.configs {
        for &x in c.lambdas() {
            let k = ((x - q.a) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                counts[k as usize] += 1;
            }
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        let lo = q.a + k as f64 * width;
        let target = simpson(|x| q.density(x), lo, lo + width, 200);
        let frac = c as f64 / total;
        let se = (target * (1.0 - target) / total).sqrt();
        assert!((frac - target).abs() <= K * se + 1.0 / n as f64 * target.max(0.01), "bin {k}: {frac} vs {target}");
    }
}

#[test]
fn one_dimensional_entropy_and_legendre() {
    let spec = quadratic(1, vec![]);
    let r = geometry::geometry_exact(&spec, &Theta::empty(), Convention::Eigenvalue, &[]).unwrap();
    let expected = -(0.5 + 0.5 * std::f64::consts::PI.ln());
    assert!((r.entropy.value - expected).abs() < 1e-8);
    assert!((r.legendre.value - r.pressure.value).abs() < 1e-12);
}

#[test]
fn gue_legendre_at_two() {
    let spec = ModelSpec::gue_chart(2);
    let r = geometry::geometry_exact(&spec, &gue_theta(0.0, 1.0), Convention::Matrix, &[]).unwrap();
    let expected = 0.5 + 0.5 * std::f64::consts::PI.ln();
    assert!((r.legendre.value - expected).abs() < 1e-8, "{}", r.legendre.value);
}

#[test]
fn entropy_ignores_constant_shift() {
    let spec = quadratic(3, vec![Polynomial::monomial(1, 1.0)]);
    let theta = Theta::new(vec![0.2]);
    let a = geometry::geometry_exact(&spec, &theta, Convention::Eigenvalue, &[]).unwrap();
    let b = geometry::geometry_exact(&spec.with_base_shift(0.7), &theta, Convention::Eigenvalue, &[]).unwrap();
    assert!((a.entropy.value - b.entropy.value).abs() < 1e-9);
    assert!((a.pressure.value - b.pressure.value - 0.7).abs() < 1e-9);
}

#[test]
fn legendre_forms_agree_on_mcmc() {
    let spec = quadratic(3, vec![Polynomial::monomial(1, 1.0)]);
    let theta = Theta::new(vec![0.3]);
    let pressure = exact::pressure_exact(&spec, &theta, Convention::Eigenvalue).unwrap();
    let batch = mcmc::sample(&spec, &theta, &SamplerConfig::new(4, 20_000, 7)).unwrap();
    let eta = geometry::dual_coordinates_mcmc(&batch).unwrap();
    let p = mcmc::Estimate::exact(pressure);
    let a = geometry::legendre_transform(&theta, &eta, &p);
    let b = geometry::legendre_trace_difference(&batch, &p).unwrap();
    let se = a.stderr.hypot(b.stderr);
    assert!((a.value - b.value).abs() <= K * se + 1e-12);
}

#[test]
fn lue_closed_form_examples() {
    assert_eq!(geometry::lue_closed_form(1.0).unwrap(), 0.5);
    assert_eq!(geometry::lue_closed_form(2.0).unwrap(), 0.125);
    assert!(geometry::lue_closed_form(0.0).is_err());
    // The model itself has metric 1/t².
    let g = exact::metric_exact(&ModelSpec::lue_chart(3), &Theta::new(vec![2.0])).unwrap();
    assert!((g[(0, 0)] - 0.25).abs() < 1e-8);
}

#[test]
fn gue_closed_form_examples() {
    let c = geometry::gue_closed_forms(0.0, 2.0, 3).unwrap();
    assert!((c.metric_mu_sigma[0][0] - 0.25).abs() < 1e-15);
    assert!((c.metric_mu_sigma[1][1] - 0.5).abs() < 1e-15);
    let g = exact::metric_exact(&ModelSpec::gue_chart(3), &gue_theta(0.0, 1.0)).unwrap();
    assert!((g[(0, 0)] - 1.0).abs() < 1e-8 && (g[(1, 1)] - 2.0).abs() < 1e-8);
}
