//! Multivariate normal utilities: conditioning and Monte Carlo orthant probabilities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// A Monte Carlo probability together with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub draws: usize,
}

impl ProbabilityEstimate {
    pub fn exact(probability: f64) -> Self {
        ProbabilityEstimate {
            probability,
            std_error: 0.0,
            draws: 0,
        }
    }

    pub fn from_counts(hits: usize, draws: usize) -> Self {
        let p = hits as f64 / draws as f64;
        ProbabilityEstimate {
            probability: p,
            std_error: (p * (1.0 - p) / draws as f64).sqrt(),
            draws,
        }
    }
}

/// `Pr(X > lower)` componentwise for `X ~ N(mean, cov)`, by direct simulation.
///
/// `cov` may be singular (e.g. redundant order constraints); the square root
/// then comes from the eigen decomposition.
pub fn orthant_probability<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    lower: &DVector<f64>,
    draws: usize,
    rng: &mut R,
) -> Result<ProbabilityEstimate> {
    let k = mean.len();
    if k == 0 {
        return Ok(ProbabilityEstimate::exact(1.0));
    }
    if draws == 0 {
        return Err(Error::Config("orthant probability needs at least one draw".into()));
    }
    let root = linalg::psd_sqrt(cov)?;
    let shift: Vec<f64> = (0..k).map(|i| mean[i] - lower[i]).collect();
    let mut z = vec![0.0; k];
    let mut hits = 0usize;
    for _ in 0..draws {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let inside = (0..k).all(|i| {
            let mut x = shift[i];
            for (j, zj) in z.iter().enumerate().take(root.ncols()) {
                x += root[(i, j)] * zj;
            }
            x > 0.0
        });
        if inside {
            hits += 1;
        }
    }
    Ok(ProbabilityEstimate::from_counts(hits, draws))
}

/// Conditional distribution of the trailing coordinates given that the first
/// `values.len()` coordinates equal `values`.
pub fn condition_leading(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    values: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = values.len();
    let n = mean.len();
    if k == 0 {
        return Ok((mean.clone(), cov.clone()));
    }
    let s11 = cov.view((0, 0), (k, k)).clone_owned();
    let s12 = cov.view((0, k), (k, n - k)).clone_owned();
    let s22 = cov.view((k, k), (n - k, n - k)).clone_owned();
    let chol = s11
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("conditioning block is singular".into()))?;
    let diff = values - mean.rows(0, k);
    let cond_mean = mean.rows(k, n - k) + s12.transpose() * chol.solve(&diff);
    let cond_cov = &s22 - s12.transpose() * chol.solve(&s12);
    let cond_cov = (&cond_cov + cond_cov.transpose()) * 0.5;
    Ok((cond_mean, cond_cov))
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
