//! Parameterization of the generalized multivariate probit model.
//!
//! Each population `g` has `P` outcomes: the first `P1` are continuous and the
//! remaining `P2` are ordinal, observed through latent normals cut by
//! thresholds. Outcomes are jointly normal with mean `B_g' x` and covariance
//! `diag(sigma, 1) C_g diag(sigma, 1)`.
//!
//! All outcome, population and category indices in the public API are 1-based,
//! matching the input file coding. Storage is 0-based.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Smallest eigenvalue a correlation matrix must exceed to count as positive definite.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Shape of the stacked correlation vector: `G` populations of `P(P-1)/2`
/// lower-triangle entries each, population-major, row-major within a
/// population: `(rho_21, rho_31, rho_32, rho_41, ...)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RhoLayout {
    outcomes: usize,
    populations: usize,
}

impl RhoLayout {
    pub fn new(outcomes: usize, populations: usize) -> Result<Self> {
        if outcomes < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 outcomes, got {outcomes}"
            )));
        }
        if populations < 1 {
            return Err(Error::InvalidModel("need at least one population".into()));
        }
        Ok(RhoLayout {
            outcomes,
            populations,
        })
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn populations(&self) -> usize {
        self.populations
    }

    pub fn per_population(&self) -> usize {
        self.outcomes * (self.outcomes - 1) / 2
    }

    /// Total length `L = G P (P-1) / 2`.
    pub fn len(&self) -> usize {
        self.populations * self.per_population()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of `rho_{g, p1 p2}` in the stacked vector. The pair may be
    /// given in either order.
    pub fn index(&self, g: usize, p1: usize, p2: usize) -> Result<usize> {
        if g == 0 || g > self.populations {
            return Err(Error::IndexOutOfRange {
                what: "population",
                index: g,
                max: self.populations,
            });
        }
        for p in [p1, p2] {
            if p == 0 || p > self.outcomes {
                return Err(Error::IndexOutOfRange {
                    what: "outcome",
                    index: p,
                    max: self.outcomes,
                });
            }
        }
        if p1 == p2 {
            return Err(Error::Diagonal(p1));
        }
        let (hi, lo) = if p1 > p2 { (p1, p2) } else { (p2, p1) };
        Ok((g - 1) * self.per_population() + (hi - 1) * (hi - 2) / 2 + (lo - 1))
    }

    /// Inverse of [`RhoLayout::index`]: returns `(g, p1, p2)` with `p1 > p2`.
    pub fn pair(&self, index: usize) -> Result<(usize, usize, usize)> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange {
                what: "correlation",
                index,
                max: self.len().saturating_sub(1),
            });
        }
        let per = self.per_population();
        let g = index / per + 1;
        let mut k = index % per;
        let mut hi = 2;
        while k >= hi - 1 {
            k -= hi - 1;
            hi += 1;
        }
        Ok((g, hi, k + 1))
    }

    /// Stacks the lower triangles of per-population correlation matrices.
    pub fn pack(&self, matrices: &[DMatrix<f64>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for c in matrices {
            pack_lower(c, &mut out);
        }
        out
    }

    /// Rebuilds one correlation matrix per population from a stacked vector.
    pub fn unpack(&self, rho: &[f64]) -> Vec<DMatrix<f64>> {
        rho.chunks(self.per_population())
            .map(|chunk| unpack_lower(self.outcomes, chunk))
            .collect()
    }
}

/// Appends the strict lower triangle of `c` in row-major order.
pub fn pack_lower(c: &DMatrix<f64>, out: &mut Vec<f64>) {
    for i in 1..c.nrows() {
        for j in 0..i {
            out.push(c[(i, j)]);
        }
    }
}

pub fn unpack_lower(p: usize, values: &[f64]) -> DMatrix<f64> {
    let mut c = DMatrix::identity(p, p);
    let mut k = 0;
    for i in 1..p {
        for j in 0..i {
            c[(i, j)] = values[k];
            c[(j, i)] = values[k];
            k += 1;
        }
    }
    c
}

/// Dimensions of a model: measurement levels, covariates and populations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    n_continuous: usize,
    categories: Vec<usize>,
    n_covariates: usize,
    sample_sizes: Vec<usize>,
}

impl ModelSpec {
    /// `categories[p]` is the category count `K_p` of the `p`-th ordinal
    /// outcome; `n_covariates` counts the intercept column when present.
    pub fn new(
        n_continuous: usize,
        categories: Vec<usize>,
        n_covariates: usize,
        sample_sizes: Vec<usize>,
    ) -> Result<Self> {
        let p = n_continuous + categories.len();
        if p < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 outcomes, got {p}"
            )));
        }
        if let Some((i, k)) = categories.iter().enumerate().find(|(_, &k)| k < 2) {
            return Err(Error::InvalidModel(format!(
                "ordinal outcome {} has {k} categories; at least 2 are required",
                n_continuous + i + 1
            )));
        }
        if n_covariates < 1 {
            return Err(Error::InvalidModel(
                "the mean structure needs at least one covariate column".into(),
            ));
        }
        if sample_sizes.is_empty() {
            return Err(Error::InvalidModel("need at least one population".into()));
        }
        let min_n = (p + n_covariates + 2).max(2 * p + 1);
        for (g, &n) in sample_sizes.iter().enumerate() {
            if n < min_n {
                return Err(Error::InvalidModel(format!(
                    "population {} has {n} observations; at least {min_n} are needed for {p} outcomes and {n_covariates} covariates",
                    g + 1
                )));
            }
        }
        Ok(ModelSpec {
            n_continuous,
            categories,
            n_covariates,
            sample_sizes,
        })
    }

    /// `P`
    pub fn outcomes(&self) -> usize {
        self.n_continuous + self.categories.len()
    }

    /// `P1`
    pub fn continuous(&self) -> usize {
        self.n_continuous
    }

    /// `P2`
    pub fn ordinal(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[usize] {
        &self.categories
    }

    /// `Q`, including the intercept column when one is used.
    pub fn covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn populations(&self) -> usize {
        self.sample_sizes.len()
    }

    pub fn sample_sizes(&self) -> &[usize] {
        &self.sample_sizes
    }

    pub fn rho_layout(&self) -> RhoLayout {
        RhoLayout {
            outcomes: self.outcomes(),
            populations: self.populations(),
        }
    }
}

/// Observed data of one population.
#[derive(Clone, Debug)]
pub struct GroupData {
    /// `n x P1`
    pub continuous: DMatrix<f64>,
    /// `ordinal[p][i]` is the category (1-based) of ordinal outcome `p` for row `i`.
    pub ordinal: Vec<Vec<usize>>,
    /// `n x Q`
    pub covariates: DMatrix<f64>,
}

impl GroupData {
    pub fn len(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A validated dataset together with the model dimensions it implies.
#[derive(Clone, Debug)]
pub struct Dataset {
    spec: ModelSpec,
    groups: Vec<GroupData>,
}

impl Dataset {
    /// Validates the groups and infers the category counts as the largest
    /// category observed for each ordinal outcome.
    pub fn new(groups: Vec<GroupData>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidModel("need at least one population".into()))?;
        let p2 = first.ordinal.len();
        let mut categories = vec![0usize; p2];
        for group in &groups {
            for (p, column) in group.ordinal.iter().enumerate().take(p2) {
                let max = column.iter().copied().max().unwrap_or(0);
                categories[p] = categories[p].max(max);
            }
        }
        Self::with_categories(groups, categories)
    }

    /// Validates the groups against declared category counts.
    pub fn with_categories(groups: Vec<GroupData>, categories: Vec<usize>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidModel("need at least one population".into()))?;
        let p1 = first.continuous.ncols();
        let q = first.covariates.ncols();
        let p2 = categories.len();
        for (gi, group) in groups.iter().enumerate() {
            let g = gi + 1;
            let n = group.covariates.nrows();
            if group.continuous.ncols() != p1 || group.covariates.ncols() != q {
                return Err(Error::InvalidModel(format!(
                    "population {g} has a different column layout"
                )));
            }
            if group.continuous.nrows() != n {
                return Err(Error::InvalidModel(format!(
                    "population {g}: continuous block has {} rows, covariates have {n}",
                    group.continuous.nrows()
                )));
            }
            if group.ordinal.len() != p2 {
                return Err(Error::InvalidModel(format!(
                    "population {g} has {} ordinal outcomes, expected {p2}",
                    group.ordinal.len()
                )));
            }
            for (p, column) in group.ordinal.iter().enumerate() {
                let outcome = p1 + p + 1;
                if column.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "population {g}: ordinal outcome {outcome} has {} rows, expected {n}",
                        column.len()
                    )));
                }
                let k = categories[p];
                let mut seen = vec![false; k + 1];
                for &u in column {
                    if u < 1 || u > k {
                        return Err(Error::InvalidModel(format!(
                            "population {g}: ordinal outcome {outcome} has category {u} outside 1..={k}"
                        )));
                    }
                    seen[u] = true;
                }
                if let Some(missing) = (1..=k).find(|&c| !seen[c]) {
                    return Err(Error::InvalidModel(format!(
                        "population {g}: category {missing} of ordinal outcome {outcome} is never observed, so its thresholds are not identified"
                    )));
                }
            }
            let xtx = group.covariates.transpose() * &group.covariates;
            if xtx.cholesky().is_none() || group.covariates.rank(1e-9) < q {
                return Err(Error::InvalidModel(format!(
                    "population {g}: covariate matrix does not have full column rank"
                )));
            }
        }
        let sample_sizes = groups.iter().map(GroupData::len).collect();
        let spec = ModelSpec::new(p1, categories, q, sample_sizes)?;
        Ok(Dataset { spec, groups })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn groups(&self) -> &[GroupData] {
        &self.groups
    }
}

/// Parameters of one population within an MCMC state.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupState {
    /// `Q x P` regression coefficients; column `p` is the mean structure of outcome `p`.
    pub coefficients: DMatrix<f64>,
    /// Error standard deviations of the continuous outcomes.
    pub sigma: Vec<f64>,
    /// `P x P` correlation matrix.
    pub correlation: DMatrix<f64>,
    /// Per ordinal outcome, the cut-points `gamma_0 = -inf, gamma_1 = 0, ..., gamma_K = +inf`.
    pub thresholds: Vec<Vec<f64>>,
    /// `latents[p][i]` is the latent score of ordinal outcome `p` for row `i`.
    pub latents: Vec<Vec<f64>>,
}

impl GroupState {
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        assemble_covariance(&self.sigma, &self.correlation)
    }

    /// Checks that every latent lies in the interval of its observed category.
    pub fn latents_consistent(&self, data: &GroupData) -> bool {
        self.latents
            .iter()
            .zip(&data.ordinal)
            .zip(&self.thresholds)
            .all(|((z, u), gamma)| {
                z.iter()
                    .zip(u)
                    .all(|(&z, &k)| z > gamma[k - 1] && z <= gamma[k])
            })
    }
}

/// One state of the sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterState {
    pub groups: Vec<GroupState>,
}

impl ParameterState {
    pub fn rho(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.groups {
            pack_lower(&g.correlation, &mut out);
        }
        out
    }
}

/// `diag(sigma, 1) C diag(sigma, 1)`, where `sigma` covers the leading continuous outcomes.
pub fn assemble_covariance(sigma: &[f64], correlation: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = correlation.nrows();
    if sigma.len() > p {
        return Err(Error::InvalidModel(format!(
            "{} standard deviations for a {p}x{p} correlation matrix",
            sigma.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidModel(format!(
            "standard deviation {s} is not positive"
        )));
    }
    if !is_positive_definite(correlation)? {
        return Err(Error::NotPositiveDefinite(
            "correlation matrix passed to assemble_covariance".into(),
        ));
    }
    let scale: Vec<f64> = (0..p).map(|i| sigma.get(i).copied().unwrap_or(1.0)).collect();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        scale[i] * correlation[(i, j)] * scale[j]
    }))
}

/// Splits a covariance matrix into standard deviations and its correlation matrix.
pub fn covariance_to_correlation(cov: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = cov.nrows();
    let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let mut c = DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    for i in 0..p {
        c[(i, i)] = 1.0;
    }
    (sd, c)
}

pub fn equicorrelation_matrix(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

/// Closed-form determinant `((P-1) rho + 1) (1 - rho)^(P-1)` of the `P x P`
/// matrix with unit diagonal and common off-diagonal `rho`.
///
/// Defined on the closed interval `[-1/(P-1), 1]`; the endpoints give 0.
pub fn equicorrelation_determinant(p: usize, rho: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidModel(format!(
            "equicorrelation needs P >= 2, got {p}"
        )));
    }
    let lower = -1.0 / (p as f64 - 1.0);
    if !(rho >= lower - 1e-15 && rho <= 1.0) {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    let det = ((p as f64 - 1.0) * rho + 1.0) * (1.0 - rho).powi(p as i32 - 1);
    Ok(det.max(0.0))
}

/// Whether the smallest eigenvalue of a symmetric matrix exceeds [`PD_TOLERANCE`].
pub fn is_positive_definite(c: &DMatrix<f64>) -> Result<bool> {
    linalg::check_symmetric(c)?;
    if c.nrows() == 0 {
        return Ok(true);
    }
    let min = c
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(min > PD_TOLERANCE)
}
