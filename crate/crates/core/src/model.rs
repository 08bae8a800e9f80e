//! Exponential-family random matrix models on eigenvalue space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// Where the eigenvalues live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    #[default]
    Full,
    Positive,
}

impl Support {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Support::Full => x.is_finite(),
            Support::Positive => x.is_finite() && x >= 0.0,
        }
    }
}

/// The family `exp(-n Tr(p + Σ θ_i F_i))` over `n × n` Hermitian matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub base: Polynomial,
    #[serde(default)]
    pub perturbations: Vec<Polynomial>,
    #[serde(default)]
    pub theta_box: Vec<[f64; 2]>,
    pub n: usize,
    #[serde(default)]
    pub support: Support,
}

/// A point of the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta {
    pub values: Vec<f64>,
}

impl Theta {
    pub fn new(values: Vec<f64>) -> Self {
        Theta { values }
    }

    pub fn empty() -> Self {
        Theta { values: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy with coordinate `i` moved by `delta`.
    pub fn shifted(&self, i: usize, delta: f64) -> Theta {
        let mut values = self.values.clone();
        values[i] += delta;
        Theta { values }
    }
}

impl From<Vec<f64>> for Theta {
    fn from(values: Vec<f64>) -> Self {
        Theta { values }
    }
}

/// Eigenvalues of one matrix, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EigenvalueConfig {
    lambdas: Vec<f64>,
}

impl EigenvalueConfig {
    /// Sorts the input, so any permutation gives the same configuration.
    pub fn new(mut lambdas: Vec<f64>) -> Self {
        lambdas.sort_by(f64::total_cmp);
        EigenvalueConfig { lambdas }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn has_coincident(&self) -> bool {
        self.lambdas.windows(2).any(|w| w[0] == w[1])
    }
}

/// Unnormalized log joint eigenvalue density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    /// Two eigenvalues coincide; `value` is then `f64::MIN`.
    pub coincident: bool,
}

impl ModelSpec {
    pub fn new(
        base: Polynomial,
        perturbations: Vec<Polynomial>,
        theta_box: Vec<[f64; 2]>,
        n: usize,
        support: Support,
    ) -> Result<Self> {
        let spec = ModelSpec {
            base,
            perturbations,
            theta_box,
            n,
            support,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses and validates a JSON model document.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// GUE chart: `p = 0`, `F = (x, x²)`.
    pub fn gue_chart(n: usize) -> Self {
        ModelSpec {
            base: Polynomial::zero(),
            perturbations: vec![Polynomial::monomial(1, 1.0), Polynomial::monomial(2, 1.0)],
            theta_box: vec![[-10.0, 10.0], [0.0, 10.0]],
            n,
            support: Support::Full,
        }
    }

    /// LUE chart: `p = 0`, `F = x`, positive eigenvalues.
    pub fn lue_chart(n: usize) -> Self {
        ModelSpec {
            base: Polynomial::zero(),
            perturbations: vec![Polynomial::monomial(1, 1.0)],
            theta_box: vec![[0.0, 10.0]],
            n,
            support: Support::Positive,
        }
    }

    pub fn dim(&self) -> usize {
        self.perturbations.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidModel("matrix size n must be at least 1".into()));
        }
        if self.theta_box.len() != self.perturbations.len() {
            return Err(Error::InvalidModel(format!(
                "theta_box has {} intervals for {} perturbations",
                self.theta_box.len(),
                self.perturbations.len()
            )));
        }
        self.base.check_degree()?;
        for f in &self.perturbations {
            f.check_degree()?;
        }
        for (i, &[lo, hi]) in self.theta_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidModel(format!(
                    "theta_box[{i}] = [{lo}, {hi}] must be a finite interval with lo < hi"
                )));
            }
        }
        self.check_confinement()
    }

    /// The top coefficient is affine in θ. It must be nonnegative at every
    /// corner of the box and positive at the centre, which makes it positive
    /// throughout the open box.
    fn check_confinement(&self) -> Result<()> {
        let top = self
            .perturbations
            .iter()
            .chain(std::iter::once(&self.base))
            .filter(|p| !p.is_zero())
            .map(|p| p.degree())
            .max();
        let Some(top) = top else {
            return Err(Error::NotConfining("potential is identically zero".into()));
        };
        let lead = |theta: &[f64]| {
            self.base.coefficient(top)
                + self
                    .perturbations
                    .iter()
                    .zip(theta)
                    .map(|(f, t)| t * f.coefficient(top))
                    .sum::<f64>()
        };
        match self.support {
            Support::Full if top < 2 || top % 2 == 1 => {
                return Err(Error::NotConfining(format!(
                    "top degree {top} must be even and at least 2 on the full line"
                )));
            }
            Support::Positive if top < 1 => {
                return Err(Error::NotConfining(
                    "potential must have degree at least 1 on the half line".into(),
                ));
            }
            _ => {}
        }
        let m = self.dim();
        if m > 20 {
            return Err(Error::InvalidModel(format!("{m} parameters exceeds the limit of 20")));
        }
        let centre: Vec<f64> = self.theta_box.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect();
        if lead(&centre) <= 0.0 {
            return Err(Error::NotConfining(format!(
                "leading coefficient of degree {top} is not positive at the box centre"
            )));
        }
        for mask in 0u32..(1u32 << m) {
            let corner: Vec<f64> = (0..m)
                .map(|i| self.theta_box[i][((mask >> i) & 1) as usize])
                .collect();
            let c = lead(&corner);
            if c < 0.0 {
                return Err(Error::NotConfining(format!(
                    "leading coefficient {c} < 0 at corner {corner:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::ParameterLength {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        for (i, (&t, &[lo, hi])) in theta.values.iter().zip(&self.theta_box).enumerate() {
            if !(t > lo && t < hi) {
                return Err(Error::ParameterDomain {
                    coordinate: i,
                    value: t,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// `p + Σ θ_i F_i` without checking the box.
    pub fn potential_unchecked(&self, theta: &[f64]) -> Polynomial {
        self.perturbations
            .iter()
            .zip(theta)
            .fold(self.base.clone(), |acc, (f, &t)| &acc + &f.scale(t))
    }

    pub fn potential_at(&self, theta: &Theta) -> Result<Polynomial> {
        self.check_theta(theta)?;
        Ok(self.potential_unchecked(&theta.values))
    }

    /// Whether `p_θ` is convex. Non-convex confining potentials are accepted.
    pub fn is_convex_at(&self, theta: &Theta) -> Result<bool> {
        Ok(self.potential_at(theta)?.is_convex())
    }

    /// Same family with `c` added to the base potential.
    pub fn with_base_shift(&self, c: f64) -> ModelSpec {
        ModelSpec {
            base: &self.base + &Polynomial::constant(c),
            ..self.clone()
        }
    }

    pub fn with_n(&self, n: usize) -> ModelSpec {
        ModelSpec { n, ..self.clone() }
    }
}

/// `p + Σ θ_i F_i`
pub fn potential_at(spec: &ModelSpec, theta: &Theta) -> Result<Polynomial> {
    spec.potential_at(theta)
}

/// `Σ_{i<j} 2 log|λ_i − λ_j| − n Σ_k p_θ(λ_k)`
pub fn log_joint_eigenvalue_density(
    spec: &ModelSpec,
    theta: &Theta,
    cfg: &EigenvalueConfig,
) -> Result<LogDensity> {
    let p = spec.potential_at(theta)?;
    if cfg.len() != spec.n {
        return Err(Error::InvalidConfig(format!(
            "{} eigenvalues for a model with n = {}",
            cfg.len(),
            spec.n
        )));
    }
    if let Some(&x) = cfg.lambdas.iter().find(|&&x| !spec.support.contains(x)) {
        return Err(Error::InvalidConfig(format!("eigenvalue {x} outside the support")));
    }
    if cfg.has_coincident() {
        return Ok(LogDensity {
            value: f64::MIN,
            coincident: true,
        });
    }
    let l = &cfg.lambdas;
    let mut vandermonde = 0.0;
    for i in 0..l.len() {
        for j in (i + 1)..l.len() {
            vandermonde += (l[j] - l[i]).ln();
        }
    }
    let energy: f64 = l.iter().map(|&x| p.eval(x)).sum();
    Ok(LogDensity {
        value: 2.0 * vandermonde - spec.n as f64 * energy,
        coincident: false,
    })
}

/// `Tr f(A) = Σ f(λ_i)`
pub fn trace_statistic(cfg: &EigenvalueConfig, f: &Polynomial) -> f64 {
    cfg.lambdas.iter().map(|&x| f.eval(x)).sum()
}

/// Independent matrices of a common size, each with its own family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductModel {
    pub components: Vec<ModelSpec>,
}

impl ProductModel {
    pub fn n(&self) -> usize {
        self.components[0].n
    }

    pub fn dim(&self) -> usize {
        self.components.iter().map(ModelSpec::dim).sum()
    }

    pub fn theta_box(&self) -> Vec<[f64; 2]> {
        self.components
            .iter()
            .flat_map(|c| c.theta_box.iter().copied())
            .collect()
    }

    /// Parameter offset of each component in the concatenated vector.
    pub fn offsets(&self) -> Vec<usize> {
        self.components
            .iter()
            .scan(0, |acc, c| {
                let start = *acc;
                *acc += c.dim();
                Some(start)
            })
            .collect()
    }

    pub fn split_theta(&self, theta: &Theta) -> Result<Vec<Theta>> {
        if theta.len() != self.dim() {
            return Err(Error::ParameterLength {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        let mut rest = theta.values.as_slice();
        let mut parts = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let (head, tail) = rest.split_at(c.dim());
            parts.push(Theta::new(head.to_vec()));
            rest = tail;
        }
        Ok(parts)
    }
}

/// Direct sum of independent models sharing `n`.
pub fn compose_independent(specs: &[ModelSpec]) -> Result<ProductModel> {
    let Some(first) = specs.first() else {
        return Err(Error::Composition("no components given".into()));
    };
    if let Some(bad) = specs.iter().find(|s| s.n != first.n) {
        return Err(Error::Composition(format!(
            "matrix sizes differ: {} vs {}",
            first.n, bad.n
        )));
    }
    for s in specs {
        s.validate()?;
    }
    Ok(ProductModel {
        components: specs.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(n: usize) -> ModelSpec {
        ModelSpec::new(Polynomial::monomial(2, 1.0), vec![], vec![], n, Support::Full).unwrap()
    }

    #[test]
    fn potential_examples() {
        let spec = quadratic(1);
        assert_eq!(spec.potential_at(&Theta::empty()).unwrap(), Polynomial::monomial(2, 1.0));

        let spec = ModelSpec::new(
            Polynomial::monomial(2, 1.0),
            vec![Polynomial::monomial(1, 1.0)],
            vec![[-1.0, 1.0]],
            1,
            Support::Full,
        )
        .unwrap();
        let p = spec.potential_at(&Theta::new(vec![0.3])).unwrap();
        assert_eq!(p.coeffs(), &[0.0, 0.3, 1.0]);

        let gue = ModelSpec::gue_chart(3);
        let p = gue.potential_at(&Theta::new(vec![-0.4, 0.7])).unwrap();
        assert_eq!(p.coeffs(), &[0.0, -0.4, 0.7]);
    }

    #[test]
    fn theta_outside_box_names_coordinate() {
        let gue = ModelSpec::gue_chart(2);
        match gue.potential_at(&Theta::new(vec![0.0, -1.0])) {
            Err(Error::ParameterDomain { coordinate, .. }) => assert_eq!(coordinate, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            gue.potential_at(&Theta::new(vec![0.0])),
            Err(Error::ParameterLength { .. })
        ));
    }

    #[test]
    fn log_density_examples() {
        let spec = quadratic(1);
        let v = log_joint_eigenvalue_density(&spec, &Theta::empty(), &EigenvalueConfig::new(vec![2.0]))
            .unwrap();
        assert_eq!(v.value, -4.0);

        let flat = ModelSpec {
            base: Polynomial::zero(),
            ..quadratic(2)
        };
        // Validation is skipped on purpose: only the arithmetic matters here.
        let v = log_joint_eigenvalue_density(&flat, &Theta::empty(), &EigenvalueConfig::new(vec![0.0, 1.0]))
            .unwrap();
        assert_eq!(v.value, 0.0);

        let spec = quadratic(2);
        let v = log_joint_eigenvalue_density(&spec, &Theta::empty(), &EigenvalueConfig::new(vec![-1.0, 1.0]))
            .unwrap();
        assert!((v.value - (2.0 * 2f64.ln() - 4.0)).abs() < 1e-15);
    }

    #[test]
    fn coincident_eigenvalues_are_flagged() {
        let spec = quadratic(2);
        let v = log_joint_eigenvalue_density(&spec, &Theta::empty(), &EigenvalueConfig::new(vec![0.5, 0.5]))
            .unwrap();
        assert!(v.coincident);
        assert_eq!(v.value, f64::MIN);
    }

    #[test]
    fn negative_eigenvalue_rejected_on_half_line() {
        let lue = ModelSpec::lue_chart(2);
        let r = log_joint_eigenvalue_density(&lue, &Theta::new(vec![1.0]), &EigenvalueConfig::new(vec![-0.1, 1.0]));
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn trace_examples() {
        let one = Polynomial::constant(1.0);
        assert_eq!(trace_statistic(&EigenvalueConfig::new(vec![0.1, 0.2, 3.0]), &one), 3.0);
        let x = Polynomial::monomial(1, 1.0);
        assert_eq!(trace_statistic(&EigenvalueConfig::new(vec![-1.0, 1.0]), &x), 0.0);
        let x2 = Polynomial::monomial(2, 1.0);
        assert_eq!(trace_statistic(&EigenvalueConfig::new(vec![-1.0, 2.0]), &x2), 5.0);
    }

    #[test]
    fn confinement_checked_on_box() {
        // Box reaching negative x² coefficient.
        let bad = ModelSpec::new(
            Polynomial::zero(),
            vec![Polynomial::monomial(1, 1.0), Polynomial::monomial(2, 1.0)],
            vec![[-1.0, 1.0], [-0.5, 1.0]],
            2,
            Support::Full,
        );
        assert!(matches!(bad, Err(Error::NotConfining(_))));
        assert!(ModelSpec::new(Polynomial::monomial(3, 1.0), vec![], vec![], 2, Support::Full).is_err());
        assert!(ModelSpec::gue_chart(4).validate().is_ok());
        assert!(ModelSpec::lue_chart(4).validate().is_ok());
    }

    #[test]
    fn non_convex_potential_is_accepted_and_reported() {
        let spec = ModelSpec::new(
            Polynomial::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]),
            vec![],
            vec![],
            3,
            Support::Full,
        )
        .unwrap();
        assert!(!spec.is_convex_at(&Theta::empty()).unwrap());
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let text = r#"{"base":[0,0,1],"perturbations":[[0,1]],"theta_box":[[-1,1]],"n":3,"support":"full"}"#;
        let spec = ModelSpec::from_json(text).unwrap();
        assert_eq!(spec.n, 3);
        let back = serde_json::to_string(&spec).unwrap();
        assert_eq!(ModelSpec::from_json(&back).unwrap(), spec);
        assert!(ModelSpec::from_json(r#"{"base":[0,0,1],"n":-2}"#).is_err());
        assert!(ModelSpec::from_json(r#"{"base":[0,0,1],"n":2,"extra":1}"#).is_err());
    }

    #[test]
    fn composition() {
        let one = compose_independent(&[ModelSpec::gue_chart(3)]).unwrap();
        assert_eq!(one.dim(), 2);
        let two = compose_independent(&[ModelSpec::gue_chart(3), ModelSpec::lue_chart(3)]).unwrap();
        assert_eq!(two.dim(), 3);
        assert_eq!(two.offsets(), vec![0, 2]);
        let parts = two.split_theta(&Theta::new(vec![0.1, 0.5, 2.0])).unwrap();
        assert_eq!(parts[1].values, vec![2.0]);
        assert!(matches!(
            compose_independent(&[ModelSpec::gue_chart(3), ModelSpec::gue_chart(4)]),
            Err(Error::Composition(_))
        ));
    }

    proptest! {
        #[test]
        fn log_density_permutation_invariant(
            mut xs in proptest::collection::vec(-3.0f64..3.0, 4),
            seed in 0usize..24,
        ) {
            let spec = ModelSpec::new(Polynomial::new(vec![0.0, 0.2, 1.0, 0.0, 0.3]), vec![], vec![], 4, Support::Full).unwrap();
            let a = log_joint_eigenvalue_density(&spec, &Theta::empty(), &EigenvalueConfig::new(xs.clone())).unwrap();
            xs.rotate_left(seed % 4);
            xs.swap(0, seed % 3);
            let b = log_joint_eigenvalue_density(&spec, &Theta::empty(), &EigenvalueConfig::new(xs)).unwrap();
            prop_assert_eq!(a.value, b.value);
        }

        #[test]
        fn constant_shift_moves_log_density_by_n_squared(
            xs in proptest::collection::vec(-3.0f64..3.0, 3),
            c in -5.0f64..5.0,
        ) {
            let spec = quadratic(3);
            let shifted = spec.with_base_shift(c);
            let cfg = EigenvalueConfig::new(xs);
            let a = log_joint_eigenvalue_density(&spec, &Theta::empty(), &cfg).unwrap();
            let b = log_joint_eigenvalue_density(&shifted, &Theta::empty(), &cfg).unwrap();
            prop_assume!(!a.coincident);
            prop_assert!((b.value - a.value + 9.0 * c).abs() < 1e-9 * (1.0 + a.value.abs()));
        }
    }
}
