//! The jointly uniform prior over positive-definite correlation matrices and
//! the prior-side quantities needed for constrained Bayes factors.
//!
//! Draws come from a C-vine of partial correlations with symmetric Beta
//! marginals. With shape `P/2 - k/2` at tree level `k` (1-based), the induced
//! density on the correlation matrix is constant over the PD region.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::bayes_factor::fisher;
use crate::error::{Error, Result};
use crate::gaussian::{self, ProbabilityEstimate};
use crate::hypothesis::{Hypothesis, Scale, Transform};
use crate::linalg;
use crate::model::{is_positive_definite, pack_lower, unpack_lower, RhoLayout};

/// Minimum number of box draws before a density estimate is considered reliable.
pub const MIN_BOX_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Prior,
    Posterior,
}

/// `S` draws of the stacked correlation vector, stored row-major.
#[derive(Clone, Debug)]
pub struct CorrelationSample {
    layout: RhoLayout,
    values: Vec<f64>,
    provenance: Provenance,
    fisher_transformed: bool,
}

impl CorrelationSample {
    pub fn new(layout: RhoLayout, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if !values.len().is_multiple_of(layout.len()) {
            return Err(Error::Config(format!(
                "{} values do not form rows of length {}",
                values.len(),
                layout.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.abs() < 1.0)) {
            return Err(Error::CorrelationOutOfRange(*v));
        }
        Ok(CorrelationSample {
            layout,
            values,
            provenance,
            fisher_transformed: false,
        })
    }

    pub fn from_rows(layout: RhoLayout, rows: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        Self::new(layout, rows.concat(), provenance)
    }

    pub fn layout(&self) -> RhoLayout {
        self.layout
    }

    pub fn width(&self) -> usize {
        self.layout.len()
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_fisher_transformed(&self) -> bool {
        self.fisher_transformed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks(self.width())
    }

    /// Column `j` across all draws.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Applies `atanh` elementwise.
    pub fn fisher(&self) -> Result<CorrelationSample> {
        if self.fisher_transformed {
            return Ok(self.clone());
        }
        let values = self.values.iter().map(|&r| fisher(r)).collect::<Result<Vec<_>>>()?;
        Ok(CorrelationSample {
            layout: self.layout,
            values,
            provenance: self.provenance,
            fisher_transformed: true,
        })
    }

    fn expect_fisher(&self, h: &Hypothesis) -> Result<()> {
        if !self.fisher_transformed || h.scale() != Scale::Fisher {
            return Err(Error::Config(
                "prior estimators expect a Fisher-transformed sample and hypothesis".into(),
            ));
        }
        if h.layout() != self.layout {
            return Err(Error::Config("hypothesis and sample have different layouts".into()));
        }
        Ok(())
    }
}

/// One draw from the uniform distribution over `P x P` correlation matrices.
pub fn sample_uniform_correlation<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let partial = vine_levels(p);
    draw_vine(p, &partial, rng)
}

fn vine_levels(p: usize) -> Vec<Beta<f64>> {
    // level k (0-based) uses Beta(b, b) with b = 1 + (p - 2 - k) / 2
    (0..p.saturating_sub(1))
        .map(|k| {
            let b = 1.0 + (p as f64 - 2.0 - k as f64) / 2.0;
            Beta::new(b, b).expect("positive shape")
        })
        .collect()
}

fn draw_vine<R: Rng + ?Sized>(p: usize, levels: &[Beta<f64>], rng: &mut R) -> DMatrix<f64> {
    let mut partial = DMatrix::<f64>::zeros(p, p);
    let mut c = DMatrix::<f64>::identity(p, p);
    for k in 0..p.saturating_sub(1) {
        for i in (k + 1)..p {
            let pc = 2.0 * levels[k].sample(rng) - 1.0;
            partial[(k, i)] = pc;
            // convert partial correlation to correlation by peeling conditioning sets
            let mut r = pc;
            for l in (0..k).rev() {
                r = r * ((1.0 - partial[(l, i)].powi(2)) * (1.0 - partial[(l, k)].powi(2))).sqrt()
                    + partial[(l, i)] * partial[(l, k)];
            }
            c[(k, i)] = r;
            c[(i, k)] = r;
        }
    }
    c
}

/// `S` independent draws of the stacked vector; populations are independent.
pub fn sample_prior_rho<R: Rng + ?Sized>(
    layout: RhoLayout,
    draws: usize,
    rng: &mut R,
) -> Result<CorrelationSample> {
    if draws == 0 {
        return Err(Error::Config("prior sample size must be at least 1".into()));
    }
    let p = layout.outcomes();
    let levels = vine_levels(p);
    let mut values = Vec::with_capacity(draws * layout.len());
    for _ in 0..draws {
        for _ in 0..layout.populations() {
            let c = draw_vine(p, &levels, rng);
            pack_lower(&c, &mut values);
        }
    }
    CorrelationSample::new(layout, values, Provenance::Prior)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub std_error: f64,
    pub accepted: usize,
    pub trials: usize,
}

/// Volume of the PD correlation region by rejection from the cube `(-1, 1)^{P(P-1)/2}`.
pub fn estimate_volume_rejection<R: Rng + ?Sized>(
    p: usize,
    trials: usize,
    rng: &mut R,
) -> Result<VolumeEstimate> {
    estimate_slice_volume(p, &[], trials, rng)
}

/// Volume of the PD region restricted to a slice where the listed lower-triangle
/// positions are held fixed; the free coordinates are sampled from their cube.
pub fn estimate_slice_volume<R: Rng + ?Sized>(
    p: usize,
    fixed: &[(usize, f64)],
    trials: usize,
    rng: &mut R,
) -> Result<VolumeEstimate> {
    if !(2..=5).contains(&p) {
        return Err(Error::Config(format!(
            "rejection volume supports 2 <= P <= 5, got {p}"
        )));
    }
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let d = p * (p - 1) / 2;
    if let Some((j, _)) = fixed.iter().find(|(j, _)| *j >= d) {
        return Err(Error::IndexOutOfRange {
            what: "correlation",
            index: *j,
            max: d - 1,
        });
    }
    let free = d - fixed.len();
    let cube = 2f64.powi(free as i32);
    let mut r = vec![0.0; d];
    let mut accepted = 0usize;
    for _ in 0..trials {
        for (j, v) in r.iter_mut().enumerate() {
            *v = match fixed.iter().find(|(k, _)| *k == j) {
                Some((_, value)) => *value,
                None => rng.random_range(-1.0..1.0),
            };
        }
        if is_positive_definite(&unpack_lower(p, &r))? {
            accepted += 1;
        }
    }
    let frac = accepted as f64 / trials as f64;
    Ok(VolumeEstimate {
        volume: cube * frac,
        std_error: cube * (frac * (1.0 - frac) / trials as f64).sqrt(),
        accepted,
        trials,
    })
}

/// A δ-box density estimate at the equality constants.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub density: f64,
    pub std_error: f64,
    pub count: usize,
    pub delta: f64,
    pub warning: Option<String>,
}

fn equality_coordinates(row: &[f64], h: &Hypothesis, out: &mut [f64]) {
    let re = h.equality_matrix();
    for (q, o) in out.iter_mut().enumerate() {
        *o = (0..row.len()).map(|j| re[(q, j)] * row[j]).sum();
    }
}

fn in_box(row: &[f64], h: &Hypothesis, delta: f64, scratch: &mut [f64]) -> bool {
    equality_coordinates(row, h, scratch);
    let half = delta / 2.0;
    scratch
        .iter()
        .zip(h.equality_constants().iter())
        .all(|(x, r)| (x - r).abs() < half)
}

/// Prior density of `xi_E = R_E eta` at the transformed constants, estimated
/// as the fraction of draws inside a box of width `delta` divided by
/// `delta^{q_E}`.
pub fn prior_density_at_equalities(
    sample: &CorrelationSample,
    h: &Hypothesis,
    delta: f64,
) -> Result<DensityEstimate> {
    sample.expect_fisher(h)?;
    let q = h.equality_count();
    if q == 0 {
        return Err(Error::Config(format!(
            "{} has no equality constraints",
            h.label()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let mut scratch = vec![0.0; q];
    let count = sample
        .rows()
        .filter(|row| in_box(row, h, delta, &mut scratch))
        .count();
    if count == 0 {
        return Err(Error::InsufficientDraws {
            context: format!(
                "{}: no prior draws inside the delta box; increase the prior draw count or delta",
                h.label()
            ),
            found: 0,
            needed: MIN_BOX_DRAWS,
        });
    }
    let s = sample.len() as f64;
    let volume = delta.powi(q as i32);
    let frac = count as f64 / s;
    let warning = (count < MIN_BOX_DRAWS).then(|| {
        format!(
            "{}: only {count} prior draws inside the delta box; the prior density is imprecise",
            h.label()
        )
    });
    Ok(DensityEstimate {
        density: frac / volume,
        std_error: (frac * (1.0 - frac) / s).sqrt() / volume,
        count,
        delta,
        warning,
    })
}

/// Prior probability of the order constraints given the equalities.
///
/// Without equalities this is the fraction of draws satisfying `R_I eta > r_I`.
/// Otherwise a normal distribution is fitted to `R~_I xi_I` over the draws in
/// the δ-box and its orthant probability above `r_I - A r_E` is simulated.
pub fn prior_conditional_order_probability<R: Rng + ?Sized>(
    sample: &CorrelationSample,
    h: &Hypothesis,
    transform: &Transform,
    delta: f64,
    mc_draws: usize,
    rng: &mut R,
) -> Result<ProbabilityEstimate> {
    sample.expect_fisher(h)?;
    let q_i = h.inequality_count();
    if q_i == 0 {
        return Ok(ProbabilityEstimate::exact(1.0));
    }
    let q_e = h.equality_count();
    if q_e == 0 {
        let hits = sample.rows().filter(|row| h.satisfies_inequalities(row)).count();
        return Ok(ProbabilityEstimate::from_counts(hits, sample.len()));
    }
    let free = transform.free_coordinates();
    let reduced = transform.reduced_inequality();
    let mut scratch = vec![0.0; q_e];
    let mut projected: Vec<Vec<f64>> = Vec::new();
    for row in sample.rows() {
        if in_box(row, h, delta, &mut scratch) {
            let zeta: Vec<f64> = (0..q_i)
                .map(|i| free.iter().enumerate().map(|(k, &c)| reduced[(i, k)] * row[c]).sum())
                .collect();
            projected.push(zeta);
        }
    }
    if projected.len() < q_i + 2 {
        return Err(Error::InsufficientDraws {
            context: format!(
                "{}: too few prior draws inside the delta box for the conditional order probability",
                h.label()
            ),
            found: projected.len(),
            needed: q_i + 2,
        });
    }
    let (mean, cov, _) = linalg::sample_moments(projected.iter().map(|v| &v[..]), q_i);
    let offset = transform.inequality_offset(h);
    gaussian::orthant_probability(&mean, &cov, &offset, mc_draws, rng)
}

/// Fraction of rows satisfying at least two of the given hypotheses' order
/// constraints; used to detect overlapping order hypotheses.
pub fn overlap_fraction(sample: &CorrelationSample, hypotheses: &[&Hypothesis]) -> f64 {
    if hypotheses.len() < 2 || sample.is_empty() {
        return 0.0;
    }
    let overlapping = sample
        .rows()
        .filter(|row| hypotheses.iter().filter(|h| h.satisfies_inequalities(row)).count() >= 2)
        .count();
    overlapping as f64 / sample.len() as f64
}

/// Mean vector of the rows of a sample.
pub fn sample_mean(sample: &CorrelationSample) -> DVector<f64> {
    let (m, _, _) = linalg::sample_moments(sample.rows(), sample.width());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{parse_constraint_line, ConstraintKind};
    use rand::SeedableRng;

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

    #[test]
    fn bivariate_marginal_is_uniform() {
        let mut r = rng(1);
        let n = 1_000_000;
        let layout = RhoLayout::new(2, 1).unwrap();
        let s = sample_prior_rho(layout, n, &mut r).unwrap();
        let x = s.column(0);
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn vine_draws_are_positive_definite() {
        let mut r = rng(2);
        for p in 2..=7 {
            for _ in 0..2000 {
                let c = sample_uniform_correlation(p, &mut r);
                assert!(is_positive_definite(&c).unwrap());
            }
        }
    }

    #[test]
    fn populations_are_independent() {
        let mut r = rng(3);
        let layout = RhoLayout::new(2, 2).unwrap();
        let s = sample_prior_rho(layout, 200_000, &mut r).unwrap();
        let a = s.column(0);
        let b = s.column(1);
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let corr = cov / (1.0 / 3.0);
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn zero_draws_rejected() {
        let layout = RhoLayout::new(3, 1).unwrap();
        assert!(sample_prior_rho(layout, 0, &mut rng(0)).is_err());
    }

    #[test]
    fn bivariate_volume_is_two() {
        let v = estimate_volume_rejection(2, 10_000, &mut rng(4)).unwrap();
        assert_eq!(v.volume, 2.0);
        assert_eq!(v.std_error, 0.0);
    }

    #[test]
    fn slice_volume_is_pi() {
        // rho_31 sits at position 1
        let v = estimate_slice_volume(3, &[(1, 0.0)], 400_000, &mut rng(5)).unwrap();
        assert!((v.volume - std::f64::consts::PI).abs() < 4.0 * v.std_error, "{v:?}");
        assert!(estimate_volume_rejection(6, 10, &mut rng(5)).is_err());
    }

    #[test]
    fn flat_density_box_estimate() {
        // P = 2: the correlation is uniform on (-1, 1); eta has density sech^2(eta)/2, i.e. 1/2 at 0
        let layout = RhoLayout::new(2, 1).unwrap();
        let s = sample_prior_rho(layout, 400_000, &mut rng(6)).unwrap().fisher().unwrap();
        let h = hypothesis(layout, &["1 2 1 0 1 0"], &[]);
        let d = prior_density_at_equalities(&s, &h, 0.1).unwrap();
        assert!((d.density - 0.5).abs() < 4.0 * d.std_error + 0.002, "{d:?}");
        assert!(d.warning.is_none());
    }

    #[test]
    fn density_requires_fisher_scale_and_equalities() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let s = sample_prior_rho(layout, 1000, &mut rng(7)).unwrap();
        let h = hypothesis(layout, &["1 3 1 0 1 0"], &[]);
        assert!(prior_density_at_equalities(&s, &h, 0.2).is_err());
        let sf = s.fisher().unwrap();
        let order = hypothesis(layout, &[], &["1 2 1 0 1 0"]);
        assert!(prior_density_at_equalities(&sf, &order, 0.2).is_err());
    }

    #[test]
    fn empty_box_is_an_error() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let s = sample_prior_rho(layout, 10, &mut rng(8)).unwrap().fisher().unwrap();
        let h = hypothesis(layout, &["1 3 1 0 1 0.99"], &[]);
        assert!(matches!(
            prior_density_at_equalities(&s, &h, 1e-6),
            Err(Error::InsufficientDraws { .. })
        ));
    }

    #[test]
    fn density_is_permutation_invariant() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let s = sample_prior_rho(layout, 20_000, &mut rng(9)).unwrap().fisher().unwrap();
        let mut rows: Vec<Vec<f64>> = s.rows().map(|r| r.to_vec()).collect();
        rows.reverse();
        rows.swap(0, 500);
        let permuted = CorrelationSample::new(
            layout,
            rows.concat().iter().map(|v| v.tanh()).collect(),
            Provenance::Prior,
        )
        .unwrap()
        .fisher()
        .unwrap();
        let h = hypothesis(layout, &["1 2 1 1 3 1"], &[]);
        let a = prior_density_at_equalities(&s, &h, 0.2).unwrap();
        let b = prior_density_at_equalities(&permuted, &h, 0.2).unwrap();
        assert_eq!(a.count, b.count);
    }

    #[test]
    fn unconditional_order_probabilities() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let s = sample_prior_rho(layout, 400_000, &mut rng(10)).unwrap().fisher().unwrap();
        let h = hypothesis(layout, &[], &["1 2 1 0 1 0"]);
        let t = h.build_transform().unwrap();
        let p = prior_conditional_order_probability(&s, &h, &t, 0.2, 10_000, &mut rng(11)).unwrap();
        assert!((p.probability - 0.5).abs() < 0.005, "{p:?}");
        let h = hypothesis(layout, &[], &["1 2 1 1 3 1", "1 3 1 1 3 2"]);
        let t = h.build_transform().unwrap();
        let p = prior_conditional_order_probability(&s, &h, &t, 0.2, 10_000, &mut rng(11)).unwrap();
        assert!((p.probability - 1.0 / 6.0).abs() < 0.005, "{p:?}");
    }

    #[test]
    fn conditional_order_probability_on_the_disc() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let s = sample_prior_rho(layout, 400_000, &mut rng(12)).unwrap().fisher().unwrap();
        let h = hypothesis(layout, &["1 3 1 0 1 0"], &["1 2 1 1 3 2"]);
        let t = h.build_transform().unwrap();
        let p = prior_conditional_order_probability(&s, &h, &t, 0.2, 200_000, &mut rng(13)).unwrap();
        assert!((p.probability - 0.5).abs() < 0.01, "{p:?}");
    }

    #[test]
    fn overlap_detection() {
        let layout = RhoLayout::new(3, 1).unwrap();
        let s = sample_prior_rho(layout, 50_000, &mut rng(14)).unwrap().fisher().unwrap();
        let a = hypothesis(layout, &[], &["1 2 1 1 3 1", "1 3 1 1 3 2"]);
        let b = hypothesis(layout, &[], &["1 3 2 1 3 1", "1 3 1 1 2 1"]);
        let nested = hypothesis(layout, &[], &["1 2 1 1 3 1"]);
        assert_eq!(overlap_fraction(&s, &[&a, &b]), 0.0);
        assert!(overlap_fraction(&s, &[&a, &nested]) > 0.1);
    }
}
