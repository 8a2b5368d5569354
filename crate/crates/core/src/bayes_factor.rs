//! Bayes factors of constrained hypotheses against the unconstrained model.
//!
//! Each factor is the product of a density ratio for the equality part and a
//! probability ratio for the order part:
//!
//! ```text
//! B_tu = (rfE / rcE) * (rfI / rcI)
//! ```
//!
//! The prior quantities (rc) come from Fisher-transformed draws of the
//! uniform prior; the posterior quantities (rf) come from a normal
//! approximation to the Fisher-transformed posterior draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{self, ProbabilityEstimate};
use crate::hypothesis::{Hypothesis, HypothesisSet, Transform};
use crate::linalg;
use crate::prior::{self, CorrelationSample, DensityEstimate};

pub const DEFAULT_DELTA: f64 = 0.2;
/// Floor on the number of Monte Carlo draws for any orthant probability.
pub const MIN_ORTHANT_DRAWS: usize = 100_000;
const RIDGE: f64 = 1e-10;

/// `atanh(rho)`.
pub fn fisher(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    Ok(rho.atanh())
}

pub fn fisher_inverse(eta: f64) -> f64 {
    eta.tanh()
}

/// `N(mean, covariance)` approximation to the Fisher-transformed posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianApprox {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Set when a ridge had to be added to make the covariance PD.
    pub regularized: bool,
}

pub fn fit_gaussian(sample: &CorrelationSample) -> Result<GaussianApprox> {
    if !sample.is_fisher_transformed() {
        return Err(Error::Config("fit_gaussian expects a Fisher-transformed sample".into()));
    }
    let l = sample.width();
    if sample.len() < 10 * l {
        return Err(Error::InsufficientDraws {
            context: "normal approximation of the posterior".into(),
            found: sample.len(),
            needed: 10 * l,
        });
    }
    let (mean, mut covariance, _) = linalg::sample_moments(sample.rows(), l);
    if let Some(j) = (0..l).find(|&j| !(covariance[(j, j)] > 0.0)) {
        return Err(Error::Numerical(format!(
            "posterior draws of correlation {} have zero variance",
            j + 1
        )));
    }
    let mut regularized = false;
    if covariance.clone().cholesky().is_none() {
        for j in 0..l {
            covariance[(j, j)] += RIDGE;
        }
        regularized = true;
        if covariance.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("posterior covariance of the Fisher draws".into()));
        }
    }
    Ok(GaussianApprox {
        mean,
        covariance,
        regularized,
    })
}

/// Density of `R_E eta` at `r_E` under the normal approximation.
pub fn posterior_density_at_equalities(approx: &GaussianApprox, h: &Hypothesis) -> Result<f64> {
    if h.equality_count() == 0 {
        return Err(Error::Config(format!("{} has no equality constraints", h.label())));
    }
    let re = h.equality_matrix();
    let mean = re * &approx.mean;
    let cov = re * &approx.covariance * re.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(linalg::mvn_log_density(h.equality_constants(), &mean, &cov)?.exp())
}

/// Posterior probability of the order constraints given the equalities.
///
/// The normal approximation is mapped to `xi = T eta`, conditioned on
/// `xi_E = r_E` and projected onto `R~_I xi_I`; the orthant probability above
/// `r_I - A r_E` is then simulated.
pub fn posterior_conditional_order_probability<R: Rng + ?Sized>(
    approx: &GaussianApprox,
    h: &Hypothesis,
    transform: &Transform,
    draws: usize,
    rng: &mut R,
) -> Result<ProbabilityEstimate> {
    if h.inequality_count() == 0 {
        return Ok(ProbabilityEstimate::exact(1.0));
    }
    let t = transform.matrix();
    let mean = t * &approx.mean;
    let cov = t * &approx.covariance * t.transpose();
    let (cond_mean, cond_cov) = gaussian::condition_leading(&mean, &cov, h.equality_constants())?;
    let reduced = transform.reduced_inequality();
    let zeta_mean = reduced * cond_mean;
    let zeta_cov = reduced * cond_cov * reduced.transpose();
    let zeta_cov = (&zeta_cov + zeta_cov.transpose()) * 0.5;
    gaussian::orthant_probability(&zeta_mean, &zeta_cov, &transform.inequality_offset(h), draws, rng)
}

/// Monte Carlo budget for a hypothesis with `q_i` order constraints.
pub fn orthant_draws(per_constraint: usize, q_i: usize) -> usize {
    (per_constraint * q_i).max(MIN_ORTHANT_DRAWS)
}

/// The four factors of one Bayes factor. Absent parts are 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Components {
    pub rc_e: f64,
    pub rc_i: f64,
    pub rf_e: f64,
    pub rf_i: f64,
}

impl Components {
    pub const UNIT: Components = Components {
        rc_e: 1.0,
        rc_i: 1.0,
        rf_e: 1.0,
        rf_i: 1.0,
    };

    pub fn rc(&self) -> f64 {
        self.rc_e * self.rc_i
    }

    pub fn rf(&self) -> f64 {
        self.rf_e * self.rf_i
    }
}

/// Prior side of one hypothesis.
#[derive(Clone, Debug)]
pub struct PriorComponents {
    pub density: Option<DensityEstimate>,
    pub order: ProbabilityEstimate,
    pub warnings: Vec<String>,
}

impl PriorComponents {
    pub fn rc_e(&self) -> f64 {
        self.density.as_ref().map_or(1.0, |d| d.density)
    }
}

/// Prior density and conditional order probability, with a re-estimate of
/// the density at `delta / 2` to flag box-size sensitivity.
pub fn prior_components<R: Rng + ?Sized>(
    sample: &CorrelationSample,
    h: &Hypothesis,
    delta: f64,
    per_constraint: usize,
    rng: &mut R,
) -> Result<PriorComponents> {
    let transform = h.build_transform()?;
    let mut warnings = Vec::new();
    let density = if h.equality_count() > 0 {
        let d = prior::prior_density_at_equalities(sample, h, delta)?;
        warnings.extend(d.warning.clone());
        match prior::prior_density_at_equalities(sample, h, delta / 2.0) {
            Ok(half) => {
                let se = (d.std_error.powi(2) + half.std_error.powi(2)).sqrt();
                if (d.density - half.density).abs() > 3.0 * se {
                    warnings.push(format!(
                        "{}: prior density changes from {:.5} to {:.5} when the box width is halved; \
                         consider more prior draws",
                        h.label(),
                        d.density,
                        half.density
                    ));
                }
            }
            Err(_) => warnings.push(format!(
                "{}: no prior draws inside the halved box; the prior density could not be checked",
                h.label()
            )),
        }
        Some(d)
    } else {
        None
    };
    let draws = orthant_draws(per_constraint, h.inequality_count());
    let order = prior::prior_conditional_order_probability(sample, h, &transform, delta, draws, rng)?;
    Ok(PriorComponents {
        density,
        order,
        warnings,
    })
}

/// Posterior side of one hypothesis.
#[derive(Clone, Copy, Debug)]
pub struct PosteriorComponents {
    pub rf_e: f64,
    pub order: ProbabilityEstimate,
}

pub fn posterior_components<R: Rng + ?Sized>(
    approx: &GaussianApprox,
    h: &Hypothesis,
    per_constraint: usize,
    rng: &mut R,
) -> Result<PosteriorComponents> {
    let transform = h.build_transform()?;
    let rf_e = if h.equality_count() > 0 {
        posterior_density_at_equalities(approx, h)?
    } else {
        1.0
    };
    let draws = orthant_draws(per_constraint, h.inequality_count());
    let order = posterior_conditional_order_probability(approx, h, &transform, draws, rng)?;
    Ok(PosteriorComponents { rf_e, order })
}

/// `B_tu` together with its factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BayesFactor {
    pub components: Components,
    pub value: f64,
    /// The posterior density at the equality constants underflowed to 0.
    pub zero_density: bool,
}

pub fn bayes_factor_constrained_vs_unconstrained(components: Components) -> Result<BayesFactor> {
    if !(components.rc_e > 0.0) || !(components.rc_i > 0.0) {
        return Err(Error::InsufficientDraws {
            context: "prior complexity is zero; increase the number of prior draws".into(),
            found: 0,
            needed: 1,
        });
    }
    if components.rf_e == 0.0 || !components.rf_e.is_finite() {
        return Ok(BayesFactor {
            components: Components {
                rf_e: 0.0,
                ..components
            },
            value: 0.0,
            zero_density: true,
        });
    }
    Ok(BayesFactor {
        value: components.rf() / components.rc(),
        components,
        zero_density: false,
    })
}

/// Bayes factor of the complement ("none of the hypotheses") against the
/// unconstrained model. Only hypotheses without equalities occupy positive
/// prior mass; `components[t]` belongs to `hypotheses[t]`.
pub fn complement_bayes_factor(hypotheses: &[Hypothesis], components: &[Components]) -> Result<BayesFactor> {
    let mut prior_mass = 0.0;
    let mut posterior_mass = 0.0;
    for (h, c) in hypotheses.iter().zip(components) {
        if h.equality_count() == 0 {
            prior_mass += c.rc_i;
            posterior_mass += c.rf_i;
        }
    }
    if prior_mass >= 1.0 {
        return Err(Error::Config(format!(
            "order hypotheses cover prior mass {prior_mass:.5} >= 1; they overlap and the complement is undefined"
        )));
    }
    let components = Components {
        rc_e: 1.0,
        rc_i: 1.0 - prior_mass,
        rf_e: 1.0,
        rf_i: (1.0 - posterior_mass).max(0.0),
    };
    Ok(BayesFactor {
        value: components.rf() / components.rc(),
        components,
        zero_density: false,
    })
}

/// Posterior probabilities from Bayes factors against a common reference.
/// `prior` defaults to equal probabilities.
pub fn posterior_probabilities(bayes_factors: &[f64], prior: Option<&[f64]>) -> Result<Vec<f64>> {
    let t = bayes_factors.len();
    if t == 0 {
        return Err(Error::Config("no Bayes factors to normalize".into()));
    }
    let equal = vec![1.0 / t as f64; t];
    let prior = prior.unwrap_or(&equal);
    if prior.len() != t {
        return Err(Error::Config(format!(
            "{} prior probabilities for {t} hypotheses",
            prior.len()
        )));
    }
    if prior.iter().any(|p| !(*p > 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::Config("prior probabilities must be positive and sum to 1".into()));
    }
    if let Some(b) = bayes_factors.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(Error::Numerical(format!("invalid Bayes factor {b}")));
    }
    let weighted: Vec<f64> = bayes_factors.iter().zip(prior).map(|(b, p)| b * p).collect();
    let total: f64 = weighted.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("all Bayes factors are zero".into()));
    }
    Ok(weighted.iter().map(|w| w / total).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaluationConfig {
    pub delta: f64,
    pub draws_per_constraint: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            delta: DEFAULT_DELTA,
            draws_per_constraint: MIN_ORTHANT_DRAWS,
        }
    }
}

/// Prior-side results for a hypothesis set; independent of the data, so
/// they can be reused across datasets with the same layout.
#[derive(Clone, Debug)]
pub struct PriorTable {
    pub hypotheses: Vec<Hypothesis>,
    pub components: Vec<PriorComponents>,
    pub warnings: Vec<String>,
}

impl PriorTable {
    /// `prior_sample` is on the correlation scale.
    pub fn compute<R: Rng + ?Sized>(
        set: &HypothesisSet,
        prior_sample: &CorrelationSample,
        config: &EvaluationConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let eta = prior_sample.fisher()?;
        let hypotheses: Vec<Hypothesis> = set
            .hypotheses()
            .iter()
            .map(Hypothesis::fisher_transform_constants)
            .collect();
        let mut components = Vec::with_capacity(hypotheses.len());
        let mut warnings = Vec::new();
        for h in &hypotheses {
            let c = prior_components(&eta, h, config.delta, config.draws_per_constraint, rng)?;
            warnings.extend(c.warnings.iter().cloned());
            components.push(c);
        }
        let order_only: Vec<&Hypothesis> = hypotheses.iter().filter(|h| h.equality_count() == 0).collect();
        if prior::overlap_fraction(&eta, &order_only) > 0.0 {
            warnings.push(
                "order hypotheses overlap or are nested; the complement hypothesis is not meaningful".into(),
            );
        }
        Ok(PriorTable {
            hypotheses,
            components,
            warnings,
        })
    }
}

#[derive(Clone, Debug)]
pub struct HypothesisResult {
    pub label: String,
    pub bayes_factor: BayesFactor,
    pub prior_order_se: f64,
    pub posterior_order_se: f64,
}

#[derive(Clone, Debug)]
pub struct BayesFactorReport {
    pub hypotheses: Vec<HypothesisResult>,
    pub complement: BayesFactor,
    /// One per hypothesis, then the complement.
    pub probabilities: Vec<f64>,
    pub approximation: GaussianApprox,
    pub warnings: Vec<String>,
}

impl BayesFactorReport {
    /// Checks the bookkeeping identities of the report.
    pub fn check_identities(&self, tol: f64) -> Result<()> {
        let all = self
            .hypotheses
            .iter()
            .map(|h| (h.label.as_str(), &h.bayes_factor))
            .chain(std::iter::once(("complement", &self.complement)));
        for (label, b) in all {
            let c = &b.components;
            let expected = if b.zero_density { 0.0 } else { c.rf() / c.rc() };
            if (b.value - expected).abs() > tol * expected.abs().max(1.0) {
                return Err(Error::Numerical(format!("{label}: B != rf / rc")));
            }
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > tol.max(1e-10) {
            return Err(Error::Numerical(format!("probabilities sum to {total}")));
        }
        Ok(())
    }
}

/// Combines precomputed prior quantities with a posterior sample
/// (correlation scale) into Bayes factors and posterior probabilities.
pub fn evaluate_with_prior<R: Rng + ?Sized>(
    prior_table: &PriorTable,
    posterior_sample: &CorrelationSample,
    config: &EvaluationConfig,
    rng: &mut R,
) -> Result<BayesFactorReport> {
    let approximation = fit_gaussian(&posterior_sample.fisher()?)?;
    let mut warnings = prior_table.warnings.clone();
    if approximation.regularized {
        warnings.push("posterior covariance was regularized with a small ridge".into());
    }
    let mut results = Vec::with_capacity(prior_table.hypotheses.len());
    for (h, pc) in prior_table.hypotheses.iter().zip(&prior_table.components) {
        let post = posterior_components(&approximation, h, config.draws_per_constraint, rng)?;
        let components = Components {
            rc_e: pc.rc_e(),
            rc_i: pc.order.probability,
            rf_e: post.rf_e,
            rf_i: post.order.probability,
        };
        let bf = bayes_factor_constrained_vs_unconstrained(components).map_err(|e| match e {
            Error::InsufficientDraws { found, needed, .. } => Error::InsufficientDraws {
                context: format!("{}: prior complexity is zero; increase the number of prior draws", h.label()),
                found,
                needed,
            },
            other => other,
        })?;
        if bf.zero_density {
            warnings.push(format!(
                "{}: posterior density at the equality constants underflows; Bayes factor set to 0",
                h.label()
            ));
        }
        results.push(HypothesisResult {
            label: h.label().to_string(),
            bayes_factor: bf,
            prior_order_se: pc.order.std_error,
            posterior_order_se: post.order.std_error,
        });
    }
    let components: Vec<Components> = results.iter().map(|r| r.bayes_factor.components).collect();
    let complement = complement_bayes_factor(&prior_table.hypotheses, &components)?;
    let mut factors: Vec<f64> = results.iter().map(|r| r.bayes_factor.value).collect();
    factors.push(complement.value);
    let probabilities = posterior_probabilities(&factors, None)?;
    Ok(BayesFactorReport {
        hypotheses: results,
        complement,
        probabilities,
        approximation,
        warnings,
    })
}

/// Full evaluation from a prior and a posterior sample on the correlation scale.
pub fn evaluate<R: Rng + ?Sized>(
    set: &HypothesisSet,
    prior_sample: &CorrelationSample,
    posterior_sample: &CorrelationSample,
    config: &EvaluationConfig,
    rng: &mut R,
) -> Result<BayesFactorReport> {
    let table = PriorTable::compute(set, prior_sample, config, rng)?;
    evaluate_with_prior(&table, posterior_sample, config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{parse_constraint_line, ConstraintKind};
    use crate::model::RhoLayout;
    use crate::prior::Provenance;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn hypothesis(layout: RhoLayout, eq: &[&str], ineq: &[&str]) -> Hypothesis {
        let mut rows = Vec::new();
        for (lines, kind) in [(eq, ConstraintKind::Equality), (ineq, ConstraintKind::Inequality)] {
            for line in lines {
                let t: Vec<&str> = line.split_whitespace().collect();
                rows.push(parse_constraint_line(&t, kind, &layout).unwrap());
            }
        }
        Hypothesis::compile("H", rows, layout).unwrap().fisher_transform_constants()
    }

    fn approx(mean: &[f64], cov: &[f64]) -> GaussianApprox {
        let l = mean.len();
        GaussianApprox {
            mean: DVector::from_column_slice(mean),
            covariance: DMatrix::from_row_slice(l, l, cov),
            regularized: false,
        }
    }

    #[test]
    fn fisher_values() {
        assert_eq!(fisher(0.0).unwrap(), 0.0);
        assert_relative_eq!(fisher(0.5).unwrap(), 0.549_306_144_334_054_9, epsilon = 1e-12);
        assert_relative_eq!(fisher(0.5).unwrap(), 0.5 * 3f64.ln(), epsilon = 1e-15);
        assert!(fisher(1.0).is_err());
        assert!(fisher(-1.5).is_err());
        assert!(fisher(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn fisher_round_trip(x in -0.999_999f64..0.999_999) {
            prop_assert!((fisher_inverse(fisher(x).unwrap()) - x).abs() < 1e-12);
        }

        #[test]
        fn fisher_increasing(a in -0.99f64..0.99, b in -0.99f64..0.99) {
            prop_assume!(a < b);
            prop_assert!(fisher(a).unwrap() < fisher(b).unwrap());
        }

        #[test]
        fn probabilities_normalize(b in proptest::collection::vec(0.0f64..100.0, 1..6)) {
            let mut b = b;
            b.push(1.0);
            let p = posterior_probabilities(&b, None).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for i in 0..b.len() {
                for j in 0..b.len() {
                    if p[j] > 1e-12 && b[j] > 1e-12 {
                        prop_assert!((p[i] / p[j] - b[i] / b[j]).abs() < 1e-9 * (b[i] / b[j]).max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn fit_recovers_generating_moments() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let mut r = rng(1);
        let mean = [0.2, -0.1, 0.4];
        let sd = [0.1, 0.2, 0.05];
        let n = 100_000;
        let mut values = Vec::with_capacity(3 * n);
        for _ in 0..n {
            let z: f64 = r.sample(StandardNormal);
            for j in 0..3 {
                let e: f64 = r.sample(StandardNormal);
                values.push((mean[j] + sd[j] * (0.6 * z + 0.8 * e)).tanh());
            }
        }
        let s = CorrelationSample::new(layout, values, Provenance::Posterior).unwrap().fisher().unwrap();
        let a = fit_gaussian(&s).unwrap();
        for j in 0..3 {
            assert!((a.mean[j] - mean[j]).abs() < 4.0 * sd[j] / (n as f64).sqrt());
            assert!((a.covariance[(j, j)] / (sd[j] * sd[j]) - 1.0).abs() < 0.02);
        }
        assert!((a.covariance[(0, 1)] / (sd[0] * sd[1]) - 0.36).abs() < 0.02);
        assert!(!a.regularized);
    }

    #[test]
    fn fit_is_permutation_invariant_and_guards() {
        let layout = RhoLayout::new(2, 1).unwrap();
        let rows: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.017).sin() * 0.9).collect();
        let s = CorrelationSample::new(layout, rows.clone(), Provenance::Posterior).unwrap();
        let mut rev = rows.clone();
        rev.reverse();
        let t = CorrelationSample::new(layout, rev, Provenance::Posterior).unwrap();
        let a = fit_gaussian(&s.fisher().unwrap()).unwrap();
        let b = fit_gaussian(&t.fisher().unwrap()).unwrap();
        assert_relative_eq!(a.mean[0], b.mean[0], epsilon = 1e-12);
        assert_relative_eq!(a.covariance[(0, 0)], b.covariance[(0, 0)], epsilon = 1e-12);
        assert!(fit_gaussian(&s).is_err());
        let few = CorrelationSample::new(layout, vec![0.1; 9], Provenance::Posterior).unwrap();
        assert!(matches!(fit_gaussian(&few.fisher().unwrap()), Err(Error::InsufficientDraws { .. })));
        let flat = CorrelationSample::new(layout, vec![0.1; 50], Provenance::Posterior).unwrap();
        assert!(fit_gaussian(&flat.fisher().unwrap()).is_err());
    }

    #[test]
    fn density_at_mode() {
        let layout = RhoLayout::new(2, 1).unwrap();
        let h = hypothesis(layout, &["1 2 1 0 1 0"], &[]);
        let v: f64 = 0.04;
        let d = posterior_density_at_equalities(&approx(&[0.0], &[v]), &h).unwrap();
        assert_relative_eq!(d, 1.0 / (2.0 * std::f64::consts::PI * v).sqrt(), epsilon = 1e-12);
        let flipped = hypothesis(layout, &["1 2 1 0 1 0"], &[]);
        assert_eq!(d, posterior_density_at_equalities(&approx(&[0.0], &[v]), &flipped).unwrap());
    }

    #[test]
    fn density_sign_flip_invariance() {
        // rho21 - rho31 = 0 versus rho31 - rho21 = 0
        let layout = RhoLayout::new(3, 1).unwrap();
        let a = approx(&[0.1, 0.3, -0.2], &[0.02, 0.005, 0.0, 0.005, 0.03, 0.001, 0.0, 0.001, 0.01]);
        let h1 = hypothesis(layout, &["1 2 1 1 3 1"], &[]);
        let h2 = hypothesis(layout, &["1 3 1 1 2 1"], &[]);
        assert_relative_eq!(
            posterior_density_at_equalities(&a, &h1).unwrap(),
            posterior_density_at_equalities(&a, &h2).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn order_probabilities_simple_cases() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let a = approx(&[0.3, 0.3, 0.0], &[0.01, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.01]);
        let mut r = rng(2);
        let h = hypothesis(layout, &[], &["1 2 1 1 3 1"]);
        let t = h.build_transform().unwrap();
        let p = posterior_conditional_order_probability(&a, &h, &t, 200_000, &mut r).unwrap();
        assert!((p.probability - 0.5).abs() < 4.0 * p.std_error, "{p:?}");
        let h = hypothesis(layout, &["1 2 1 0 1 0"], &[]);
        let t = h.build_transform().unwrap();
        let p = posterior_conditional_order_probability(&a, &h, &t, 200_000, &mut r).unwrap();
        assert_eq!(p.probability, 1.0);
        let b = approx(&[0.0, 0.0, 0.2], &[0.01, 0.0, 0.0, 0.0, 0.02, 0.0, 0.0, 0.0, 0.01]);
        let h = hypothesis(layout, &[], &["1 2 1 0 1 0", "1 3 1 0 1 0"]);
        let t = h.build_transform().unwrap();
        let p = posterior_conditional_order_probability(&b, &h, &t, 200_000, &mut r).unwrap();
        assert!((p.probability - 0.25).abs() < 4.0 * p.std_error, "{p:?}");
    }

    #[test]
    fn conditioning_on_equality_matches_direct_conditional() {
        // eta ~ N(m, S); given eta31 = 0, Pr(eta21 > eta32) from the bivariate conditional
        let layout = RhoLayout::new(3, 1).unwrap();
        let cov = [0.02, 0.008, 0.0, 0.008, 0.03, 0.006, 0.0, 0.006, 0.015];
        let a = approx(&[0.1, 0.05, 0.2], &cov);
        let h = hypothesis(layout, &["1 3 1 0 1 0"], &["1 2 1 1 3 2"]);
        let t = h.build_transform().unwrap();
        let p = posterior_conditional_order_probability(&a, &h, &t, 400_000, &mut rng(3)).unwrap();
        // conditional of (eta21, eta32) given eta31 = 0
        let s = DMatrix::from_row_slice(3, 3, &cov);
        let g = 1.0 / s[(1, 1)];
        let m21 = 0.1 + s[(0, 1)] * g * (0.0 - 0.05);
        let m32 = 0.2 + s[(2, 1)] * g * (0.0 - 0.05);
        let v21 = s[(0, 0)] - s[(0, 1)] * s[(0, 1)] * g;
        let v32 = s[(2, 2)] - s[(2, 1)] * s[(2, 1)] * g;
        let c = s[(0, 2)] - s[(0, 1)] * s[(1, 2)] * g;
        let exact = gaussian::normal_cdf((m21 - m32) / (v21 + v32 - 2.0 * c).sqrt());
        assert!((p.probability - exact).abs() < 4.0 * p.std_error + 1e-4, "{} vs {exact}", p.probability);
    }

    #[test]
    fn lemma_arithmetic() {
        let b = bayes_factor_constrained_vs_unconstrained(Components {
            rc_e: 1.0,
            rc_i: 1.0 / 6.0,
            rf_e: 1.0,
            rf_i: 0.9,
        })
        .unwrap();
        assert_relative_eq!(b.value, 5.4, epsilon = 1e-12);
        let u = bayes_factor_constrained_vs_unconstrained(Components::UNIT).unwrap();
        assert_eq!(u.value, 1.0);
        let c = Components {
            rc_e: 0.64325,
            rc_i: 0.00630,
            rf_e: 1.0,
            rf_i: 1.0,
        };
        assert_eq!(format!("{:.5}", c.rc()), "0.00405");
        assert!(bayes_factor_constrained_vs_unconstrained(Components { rc_i: 0.0, ..c }).is_err());
        let z = bayes_factor_constrained_vs_unconstrained(Components { rf_e: 0.0, ..c }).unwrap();
        assert!(z.zero_density && z.value == 0.0);
    }

    #[test]
    fn complement_cases() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let eq = hypothesis(layout, &["1 2 1 1 3 1", "1 3 1 1 3 2"], &[]);
        let order = hypothesis(layout, &[], &["1 2 1 1 3 1", "1 3 1 1 3 2"]);
        let other = hypothesis(layout, &[], &["1 3 2 1 3 1", "1 3 1 1 2 1"]);
        let c_eq = Components {
            rc_e: 0.3,
            rc_i: 1.0,
            rf_e: 2.0,
            rf_i: 1.0,
        };
        let none = complement_bayes_factor(std::slice::from_ref(&eq), &[c_eq]).unwrap();
        assert_eq!(none.value, 1.0);
        assert_eq!(none.components, Components::UNIT);
        let c_order = Components {
            rc_e: 1.0,
            rc_i: 1.0 / 6.0,
            rf_e: 1.0,
            rf_i: 0.9,
        };
        let one = complement_bayes_factor(&[eq, order.clone()], &[c_eq, c_order]).unwrap();
        assert_relative_eq!(one.value, 0.12, epsilon = 1e-12);
        let two = complement_bayes_factor(&[order.clone(), other], &[c_order, c_order]).unwrap();
        assert_relative_eq!(two.components.rc_i, 2.0 / 3.0, epsilon = 1e-12);
        let full = Components { rc_i: 0.6, ..c_order };
        assert!(complement_bayes_factor(&[order.clone(), order], &[full, full]).is_err());
    }

    #[test]
    fn probabilities_examples() {
        let p = posterior_probabilities(&[10.0, 5.0, 1.0], None).unwrap();
        assert_relative_eq!(p[0], 10.0 / 16.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], 5.0 / 16.0, epsilon = 1e-15);
        assert_relative_eq!(p[2], 1.0 / 16.0, epsilon = 1e-15);
        // B13 = B12 * B23
        let b = [50.0, 5.0, 1.0];
        let p = posterior_probabilities(&b, None).unwrap();
        assert_relative_eq!(p[0] / p[1], 10.0, epsilon = 1e-12);
        assert_relative_eq!(p[1] / p[2], 5.0, epsilon = 1e-12);
        assert_relative_eq!(p[0] / p[2], 50.0, epsilon = 1e-12);
        let p = posterior_probabilities(&[2.0, 2.0, 2.0], None).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = posterior_probabilities(&[1.0, 1.0], Some(&[0.25, 0.75])).unwrap();
        assert_relative_eq!(p[1], 0.75, epsilon = 1e-15);
        assert!(posterior_probabilities(&[1.0, 1.0], Some(&[0.5, 0.6])).is_err());
        assert!(posterior_probabilities(&[0.0, 0.0], None).is_err());
    }

    #[test]
    fn end_to_end_identities() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let mut r = rng(4);
        let prior = prior::sample_prior_rho(layout, 200_000, &mut r).unwrap();
        let mut post = Vec::new();
        for _ in 0..5000 {
            for m in [0.3f64, 0.2, 0.1] {
                let e: f64 = r.sample(StandardNormal);
                post.push((m.atanh() + 0.08 * e).tanh());
            }
        }
        let post = CorrelationSample::new(layout, post, Provenance::Posterior).unwrap();
        let raw = |eq: &[&str], ineq: &[&str], label: &str| {
            let mut rows = Vec::new();
            for (lines, kind) in [(eq, ConstraintKind::Equality), (ineq, ConstraintKind::Inequality)] {
                for line in lines {
                    let t: Vec<&str> = line.split_whitespace().collect();
                    rows.push(parse_constraint_line(&t, kind, &layout).unwrap());
                }
            }
            Hypothesis::compile(label, rows, layout).unwrap()
        };
        let set = HypothesisSet::new(vec![
            raw(&["1 2 1 1 3 1", "1 3 1 1 3 2"], &[], "H1"),
            raw(&[], &["1 2 1 1 3 1", "1 3 1 1 3 2"], "H2"),
        ])
        .unwrap();
        let report = evaluate(&set, &prior, &post, &EvaluationConfig::default(), &mut r).unwrap();
        report.check_identities(1e-12).unwrap();
        assert_eq!(report.probabilities.len(), 3);
        let h2 = &report.hypotheses[1].bayes_factor;
        assert!((h2.components.rc_i - 1.0 / 6.0).abs() < 0.005);
        assert!(h2.value > 1.0);
        assert_relative_eq!(report.complement.components.rc_i, 1.0 - h2.components.rc_i, epsilon = 1e-15);
    }
}
