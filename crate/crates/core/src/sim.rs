//! Synthetic data from the generalized multivariate probit model and the
//! consistency experiment over a grid of correlations and sample sizes.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bayes_factor::{self, EvaluationConfig, PriorTable};
use crate::error::{Error, Result};
use crate::hypothesis::{parse_constraint_line, ConstraintKind, Hypothesis, HypothesisSet};
use crate::linalg;
use crate::mcmc::{self, ChainConfig};
use crate::model::{self, Dataset, GroupData, RhoLayout};
use crate::prior;

/// Generating parameters for one population with an intercept-only design.
/// Continuous outcomes come first; `thresholds` holds the interior cut
/// points of each ordinal outcome.
#[derive(Clone, Debug)]
pub struct ProbitDesign {
    pub intercepts: Vec<f64>,
    pub sigma: Vec<f64>,
    pub correlation: DMatrix<f64>,
    pub thresholds: Vec<Vec<f64>>,
}

impl ProbitDesign {
    pub fn outcomes(&self) -> usize {
        self.intercepts.len()
    }

    fn validate(&self) -> Result<()> {
        let p = self.outcomes();
        if self.correlation.nrows() != p || self.sigma.len() + self.thresholds.len() != p {
            return Err(Error::InvalidModel("design dimensions do not agree".into()));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidModel("standard deviations must be positive".into()));
        }
        if self.thresholds.iter().any(|t| t.windows(2).any(|w| w[0] >= w[1])) {
            return Err(Error::InvalidModel("thresholds must increase".into()));
        }
        if !model::is_positive_definite(&self.correlation)? {
            return Err(Error::NotPositiveDefinite("design correlation matrix".into()));
        }
        Ok(())
    }

    /// Latent draws (`n x P`) and the observed dataset built from them.
    /// Latent rows are redrawn until every ordinal category is observed,
    /// giving up after 1000 attempts.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(DMatrix<f64>, Dataset)> {
        self.validate()?;
        let p = self.outcomes();
        let p1 = self.sigma.len();
        let cov = model::assemble_covariance(&self.sigma, &self.correlation)?;
        let l = linalg::cholesky_lower(&cov)?;
        for _ in 0..1000 {
            let e = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut z = e * l.transpose();
            for j in 0..p {
                z.column_mut(j).add_scalar_mut(self.intercepts[j]);
            }
            let ordinal: Vec<Vec<usize>> = self
                .thresholds
                .iter()
                .enumerate()
                .map(|(k, cuts)| {
                    z.column(p1 + k)
                        .iter()
                        .map(|&v| 1 + cuts.iter().filter(|&&c| v > c).count())
                        .collect()
                })
                .collect();
            let complete = ordinal.iter().zip(&self.thresholds).all(|(obs, cuts)| {
                (1..=cuts.len() + 1).all(|c| obs.contains(&c))
            });
            if !complete {
                continue;
            }
            let group = GroupData {
                continuous: z.columns(0, p1).into_owned(),
                ordinal,
                covariates: DMatrix::from_element(n, 1, 1.0),
            };
            let data = Dataset::new(vec![group])?;
            return Ok((z, data));
        }
        Err(Error::InvalidModel(format!(
            "could not observe every ordinal category with n = {n}"
        )))
    }
}

/// Largest `|rho|` for which the grid correlation matrix is positive definite.
pub fn rho_bound() -> f64 {
    // det = 1 - rho^2 - rho^2/4 > 0
    (4.0f64 / 5.0).sqrt()
}

/// Correlation matrix of the grid design: `rho21 = rho`, `rho31 = rho/2`, `rho32 = 0`.
pub fn grid_correlation(rho: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, rho, rho / 2.0, rho, 1.0, 0.0, rho / 2.0, 0.0, 1.0])
}

/// One continuous, one binary and one three-category outcome, all with intercept 1.
pub fn grid_design(rho: f64) -> ProbitDesign {
    ProbitDesign {
        intercepts: vec![1.0; 3],
        sigma: vec![1.0],
        correlation: grid_correlation(rho),
        thresholds: vec![vec![0.0], vec![0.0, 1.0]],
    }
}

/// Draws one dataset of the grid design.
pub fn generate_dataset<R: Rng + ?Sized>(rho: f64, n: usize, rng: &mut R) -> Result<Dataset> {
    if !(rho.abs() < rho_bound()) {
        return Err(Error::NotPositiveDefinite(format!("grid correlation matrix at rho = {rho}")));
    }
    grid_design(rho).generate(n, rng).map(|(_, d)| d)
}

/// `H1: rho21 = rho31 = rho32` and `H2: rho21 > rho31 > rho32`; the
/// complement is added during evaluation.
pub fn grid_hypotheses() -> Result<HypothesisSet> {
    let layout = RhoLayout::new(3, 1)?;
    let row = |line: &str, kind| {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        parse_constraint_line(&tokens, kind, &layout)
    };
    let h1 = Hypothesis::compile(
        "H1",
        vec![
            row("1 2 1 1 3 1", ConstraintKind::Equality)?,
            row("1 3 1 1 3 2", ConstraintKind::Equality)?,
        ],
        layout,
    )?;
    let h2 = Hypothesis::compile(
        "H2",
        vec![
            row("1 2 1 1 3 1", ConstraintKind::Inequality)?,
            row("1 3 1 1 3 2", ConstraintKind::Inequality)?,
        ],
        layout,
    )?;
    HypothesisSet::new(vec![h1, h2])
}

#[derive(Clone, Debug)]
pub struct SimDesign {
    pub rho_grid: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub chain: ChainConfig,
    pub prior_draws: usize,
    pub evaluation: EvaluationConfig,
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign {
            rho_grid: (-7..=7).map(|k| k as f64 / 10.0).collect(),
            sample_sizes: vec![30, 100, 500],
            replications: 10,
            seed: 1,
            chain: ChainConfig {
                burn_in: 1000,
                draws: 5000,
                ..ChainConfig::default()
            },
            prior_draws: 100_000,
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl SimDesign {
    fn validate(&self) -> Result<()> {
        if self.rho_grid.is_empty() || self.sample_sizes.is_empty() || self.replications == 0 {
            return Err(Error::Config("the grid needs at least one rho, one n and one replication".into()));
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(r.abs() < rho_bound())) {
            return Err(Error::Config(format!(
                "rho = {r} makes the design correlation matrix indefinite (|rho| < {:.3})",
                rho_bound()
            )));
        }
        self.chain.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub rho: f64,
    pub n: usize,
    pub replication: usize,
    /// Posterior probabilities of H1, H2 and the complement.
    pub probabilities: [f64; 3],
    /// Datasets discarded because the sampler failed on them.
    pub redraws: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of replication `rep` in cell (`i`, `j`); independent of run order.
pub fn cell_seed(seed: u64, i: usize, j: usize, rep: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ i as u64) ^ ((j as u64) << 32 | rep as u64))
}

/// Prior quantities of the grid hypotheses, shared by every cell.
pub fn grid_prior_table(design: &SimDesign) -> Result<PriorTable> {
    let set = grid_hypotheses()?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(design.seed));
    let sample = prior::sample_prior_rho(RhoLayout::new(3, 1)?, design.prior_draws, &mut rng)?;
    PriorTable::compute(&set, &sample, &design.evaluation, &mut rng)
}

/// Datasets drawn per replication before giving up.
pub const MAX_DATASETS: usize = 25;

/// Runs one replication of one cell. Small samples with sparse ordinal
/// cross-tables can push a correlation to +-1, where the sampler stops; such
/// datasets are replaced by a fresh draw. Returns the probabilities and the
/// number of replaced datasets.
pub fn run_replication(
    design: &SimDesign,
    table: &PriorTable,
    rho: f64,
    n: usize,
    seed: u64,
) -> Result<([f64; 3], usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_error = None;
    for attempt in 0..MAX_DATASETS {
        let data = generate_dataset(rho, n, &mut rng)?;
        let config = ChainConfig {
            seed: splitmix(seed ^ attempt as u64),
            ..design.chain.clone()
        };
        let chain = match mcmc::run_chain(&data, &config) {
            Ok(chain) => chain,
            Err(e) => {
                last_error = Some(e);
                continue;
            }
        };
        let report = bayes_factor::evaluate_with_prior(table, &chain.rho, &design.evaluation, &mut rng)?;
        let p = &report.probabilities;
        return Ok(([p[0], p[1], p[2]], attempt));
    }
    Err(Error::Numerical(format!(
        "rho = {rho}, n = {n}: sampler failed on {MAX_DATASETS} datasets in a row; last error: {}",
        last_error.map_or_else(String::new, |e| e.to_string())
    )))
}

/// Every replication of every cell, ordered by rho, n and replication.
/// `progress` is called after each finished replication.
pub fn run_consistency_grid(design: &SimDesign, progress: &(dyn Fn(&GridRow) + Sync)) -> Result<Vec<GridRow>> {
    design.validate()?;
    let table = grid_prior_table(design)?;
    let mut jobs = Vec::new();
    for (i, &rho) in design.rho_grid.iter().enumerate() {
        for (j, &n) in design.sample_sizes.iter().enumerate() {
            for rep in 0..design.replications {
                jobs.push((rho, n, rep, cell_seed(design.seed, i, j, rep)));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(rho, n, rep, seed)| {
            let (probabilities, redraws) = run_replication(design, &table, rho, n, seed)?;
            let row = GridRow {
                rho,
                n,
                replication: rep + 1,
                probabilities,
                redraws,
            };
            progress(&row);
            Ok(row)
        })
        .collect()
}

/// Mean probabilities per (rho, n) cell, in grid order.
pub fn cell_means(rows: &[GridRow]) -> Vec<(f64, usize, [f64; 3])> {
    let mut out: Vec<(f64, usize, [f64; 3], usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|c| c.0 == r.rho && c.1 == r.n) {
            Some(c) => {
                for k in 0..3 {
                    c.2[k] += r.probabilities[k];
                }
                c.3 += 1;
            }
            None => out.push((r.rho, r.n, r.probabilities, 1)),
        }
    }
    out.into_iter()
        .map(|(rho, n, sum, count)| (rho, n, sum.map(|s| s / count as f64)))
        .collect()
}

pub fn write_csv<W: Write>(mut w: W, rows: &[GridRow]) -> std::io::Result<()> {
    writeln!(w, "rho,n,replication,p_H1,p_H2,p_H3")?;
    for r in rows {
        let [a, b, c] = r.probabilities;
        writeln!(w, "{},{},{},{a:.6},{b:.6},{c:.6}", r.rho, r.n, r.replication)?;
    }
    w.flush()
}

/// Sample mean and covariance of the rows of `z`.
pub fn column_moments(z: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let rows: Vec<Vec<f64>> = z.row_iter().map(|r| r.iter().copied().collect()).collect();
    let (m, c, _) = linalg::sample_moments(rows.iter().map(Vec::as_slice), z.ncols());
    (m, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::covariance_to_correlation;

    #[test]
    fn independent_cell_has_small_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4000;
        let (z, data) = grid_design(0.0).generate(n, &mut rng).unwrap();
        let (_, c) = covariance_to_correlation(&column_moments(&z).1);
        for i in 0..3 {
            for j in 0..i {
                assert!(c[(i, j)].abs() < 3.0 / (n as f64).sqrt(), "{i}{j}: {}", c[(i, j)]);
            }
        }
        assert_eq!(data.spec().categories(), &[2, 3]);
    }

    #[test]
    fn continuous_mean_is_the_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 5000;
        let data = generate_dataset(0.4, n, &mut rng).unwrap();
        let x = &data.groups()[0].continuous;
        let mean = x.mean();
        assert!((mean - 1.0).abs() < 4.0 / (n as f64).sqrt(), "{mean}");
        let binary = &data.groups()[0].ordinal[0];
        assert!(binary.iter().all(|&c| c == 1 || c == 2));
        assert!(binary.contains(&1) && binary.contains(&2));
    }

    #[test]
    fn latent_correlations_recover_the_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (z, _) = grid_design(0.6).generate(20_000, &mut rng).unwrap();
        let (_, c) = covariance_to_correlation(&column_moments(&z).1);
        assert!((c[(1, 0)] - 0.6).abs() < 0.03);
        assert!((c[(2, 0)] - 0.3).abs() < 0.03);
        assert!(c[(2, 1)].abs() < 0.03);
    }

    #[test]
    fn indefinite_cells_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(generate_dataset(0.9, 50, &mut rng).is_err());
        assert!(generate_dataset(0.89, 50, &mut rng).is_ok());
        let design = SimDesign {
            rho_grid: vec![0.95],
            ..SimDesign::default()
        };
        assert!(matches!(run_consistency_grid(&design, &|_| {}), Err(Error::Config(_))));
    }

    #[test]
    fn grid_hypotheses_have_expected_structure() {
        let set = grid_hypotheses().unwrap();
        let h = set.hypotheses();
        assert_eq!((h[0].equality_count(), h[0].inequality_count()), (2, 0));
        assert_eq!((h[1].equality_count(), h[1].inequality_count()), (0, 2));
        assert!(h[1].satisfies(&[0.5, 0.3, 0.1], 0.0));
        assert!(!h[1].satisfies(&[0.5, 0.0, 0.1], 0.0));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..15 {
            for j in 0..3 {
                for r in 0..10 {
                    assert!(seen.insert(cell_seed(1, i, j, r)));
                }
            }
        }
        assert_eq!(cell_seed(1, 2, 1, 3), cell_seed(1, 2, 1, 3));
    }

    #[test]
    fn small_grid_rows_sum_to_one_and_are_reproducible() {
        let design = SimDesign {
            rho_grid: vec![0.0, 0.6],
            sample_sizes: vec![30],
            replications: 2,
            chain: ChainConfig {
                burn_in: 200,
                draws: 1000,
                ..ChainConfig::default()
            },
            prior_draws: 20_000,
            ..SimDesign::default()
        };
        let a = run_consistency_grid(&design, &|_| {}).unwrap();
        assert_eq!(a.len(), 4);
        for r in &a {
            let s: f64 = r.probabilities.iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        let b = run_consistency_grid(&design, &|_| {}).unwrap();
        assert_eq!(a, b);
        let means = cell_means(&a);
        assert_eq!(means.len(), 2);
        let mut csv = Vec::new();
        write_csv(&mut csv, &a).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("rho,n,replication,p_H1,p_H2,p_H3\n0,30,1,"));
        assert_eq!(text.lines().count(), 5);
    }
}
