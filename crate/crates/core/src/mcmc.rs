//! Gibbs/Metropolis sampler for the unconstrained generalized multivariate probit model.
//!
//! One iteration updates, per population: the latent scores of the ordinal
//! outcomes, the regression coefficients, the correlation matrix (inverse
//! Wishart candidate, accepted with log ratio 0), the free thresholds, the
//! standard deviations of the continuous outcomes, and finally a scale
//! expansion per ordinal outcome that jointly rescales its latents,
//! coefficients and free thresholds.
//!
//! Priors: flat on the coefficients and thresholds, `1/sigma` on each
//! standard deviation and jointly uniform on each correlation matrix.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    covariance_to_correlation, is_positive_definite, Dataset, GroupData,
    GroupState, ParameterState,
};
use crate::prior::{CorrelationSample, Provenance};
use crate::truncnorm;

const TARGET_ACCEPTANCE: f64 = 0.44;
const ADAPT_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub seed: u64,
    /// Initial standard deviation of the log-scale random walk for each sigma.
    pub sigma_step: f64,
    /// Initial standard deviation of the log-scale random walk for the expansion scales.
    pub expansion_step: f64,
    /// Whether the scale-expansion move runs at all.
    pub expansion: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            burn_in: 2000,
            draws: 10_000,
            thin: 1,
            seed: 1,
            sigma_step: 0.1,
            expansion_step: 0.05,
            expansion: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("the chain must retain at least one draw".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        if !(self.sigma_step > 0.0 && self.expansion_step > 0.0) {
            return Err(Error::Config("random-walk steps must be positive".into()));
        }
        Ok(())
    }
}

/// Quantities that depend only on the design matrix of one population.
#[derive(Clone, Debug)]
pub struct GroupCache {
    /// `(X'X)^{-1} X'`
    projection: DMatrix<f64>,
    /// Lower Cholesky factor of `(X'X)^{-1}`.
    row_root: DMatrix<f64>,
}

impl GroupCache {
    pub fn new(data: &GroupData) -> Result<Self> {
        let x = &data.covariates;
        let xtx_inv = linalg::spd_inverse(&(x.transpose() * x))
            .map_err(|_| Error::InvalidModel("X'X is singular".into()))?;
        let row_root = linalg::cholesky_lower(&xtx_inv)?;
        Ok(GroupCache {
            projection: &xtx_inv * x.transpose(),
            row_root,
        })
    }
}

/// `[V Z]`: continuous outcomes followed by the current latent scores.
fn stacked_outcomes(state: &GroupState, data: &GroupData) -> DMatrix<f64> {
    let n = data.len();
    let p1 = data.continuous.ncols();
    let p = p1 + state.latents.len();
    let mut y = DMatrix::zeros(n, p);
    y.columns_mut(0, p1).copy_from(&data.continuous);
    for (k, z) in state.latents.iter().enumerate() {
        y.column_mut(p1 + k).copy_from_slice(z);
    }
    y
}

fn residuals(state: &GroupState, data: &GroupData) -> DMatrix<f64> {
    stacked_outcomes(state, data) - &data.covariates * &state.coefficients
}

fn precision(state: &GroupState) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(&state.covariance()?)
}

/// Updates every latent score from its univariate normal conditional given
/// the other outcomes, truncated to the interval of the observed category.
pub fn sample_latents<R: Rng + ?Sized>(
    state: &mut GroupState,
    data: &GroupData,
    rng: &mut R,
) -> Result<()> {
    if state.latents.is_empty() {
        return Ok(());
    }
    let omega = precision(state)?;
    let mut e = residuals(state, data);
    let p1 = data.continuous.ncols();
    let p = e.ncols();
    let n = data.len();
    for k in 0..state.latents.len() {
        let c = p1 + k;
        let w = omega[(c, c)];
        if !(w > 0.0) {
            return Err(Error::Numerical(format!(
                "degenerate conditional variance for outcome {}",
                c + 1
            )));
        }
        let sd = 1.0 / w.sqrt();
        let gamma = &state.thresholds[k];
        for i in 0..n {
            let mut cross = 0.0;
            for j in 0..p {
                if j != c {
                    cross += omega[(c, j)] * e[(i, j)];
                }
            }
            let cond_mean = -cross / w;
            let z_old = state.latents[k][i];
            let mu = z_old - e[(i, c)];
            let cat = data.ordinal[k][i];
            let draw = truncnorm::sample(rng, mu + cond_mean, sd, gamma[cat - 1], gamma[cat]);
            state.latents[k][i] = draw;
            e[(i, c)] = draw - mu;
        }
    }
    Ok(())
}

/// Matrix-normal draw `B ~ N(B_hat, (X'X)^{-1}, Sigma)` with `B_hat` the least
/// squares fit of `[V Z]` on `X`.
pub fn sample_coefficients<R: Rng + ?Sized>(
    state: &mut GroupState,
    data: &GroupData,
    cache: &GroupCache,
    rng: &mut R,
) -> Result<()> {
    let y = stacked_outcomes(state, data);
    let b_hat = &cache.projection * &y;
    let col_root = linalg::cholesky_lower(&state.covariance()?)?;
    let z = DMatrix::from_fn(b_hat.nrows(), b_hat.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    state.coefficients = b_hat + &cache.row_root * z * col_root.transpose();
    Ok(())
}

/// Draws `Sigma ~ IW(df, scale)` via the Bartlett decomposition of its inverse.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if !(df > p as f64 - 1.0) {
        return Err(Error::Numerical(format!(
            "inverse Wishart needs df > {}, got {df}",
            p - 1
        )));
    }
    let l = linalg::cholesky_lower(&linalg::spd_inverse(scale)?)?;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    let sigma = linalg::spd_inverse(&w)?;
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Correlation-matrix update.
///
/// A candidate covariance is drawn from `IW(n - P - 1, S)` where `S` is built
/// from the column-normalized residuals scaled by `diag(1/sigma, 1)`; its
/// correlation matrix is the candidate. Candidate and target priors on the
/// correlation matrix are both uniform, so the Metropolis log ratio is 0.
/// Returns whether the candidate was accepted.
pub fn sample_correlation_matrix<R: Rng + ?Sized>(
    state: &mut GroupState,
    data: &GroupData,
    rng: &mut R,
) -> Result<bool> {
    let e = residuals(state, data);
    let n = e.nrows();
    let p = e.ncols();
    let mut normalized = e;
    for mut col in normalized.column_iter_mut() {
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::NotPositiveDefinite("residual column has zero variance".into()));
        }
        col /= norm;
    }
    let inv_scale: Vec<f64> = (0..p)
        .map(|j| state.sigma.get(j).map_or(1.0, |s| 1.0 / s))
        .collect();
    let cross = normalized.transpose() * &normalized;
    let scale = DMatrix::from_fn(p, p, |i, j| inv_scale[i] * cross[(i, j)] * inv_scale[j]);
    if scale.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(
            "residual scale matrix (too few observations or collinear residuals)".into(),
        ));
    }
    let candidate = sample_inverse_wishart((n - p - 1) as f64, &scale, rng)?;
    let (_, corr) = covariance_to_correlation(&candidate);

    // uniform target prior over uniform candidate prior
    let log_ratio = 0.0;
    let accept = rng.random::<f64>().ln() < log_ratio;
    if accept {
        if !is_positive_definite(&corr)? {
            return Err(Error::NotPositiveDefinite(
                "candidate correlation matrix; a correlation reached +-1, which happens when \
                 cross-tables of ordinal outcomes have empty corner cells"
                    .into(),
            ));
        }
        state.correlation = corr;
    }
    Ok(accept)
}

/// Draws each free threshold uniformly between the largest latent of the
/// category below it and the smallest latent of the category above it.
pub fn sample_thresholds<R: Rng + ?Sized>(
    state: &mut GroupState,
    data: &GroupData,
    rng: &mut R,
) -> Result<()> {
    for (k, gamma) in state.thresholds.iter_mut().enumerate() {
        let n_cat = gamma.len() - 1;
        if n_cat < 3 {
            continue;
        }
        let z = &state.latents[k];
        let u = &data.ordinal[k];
        let mut max_in = vec![f64::NEG_INFINITY; n_cat + 1];
        let mut min_in = vec![f64::INFINITY; n_cat + 1];
        for (&zi, &ui) in z.iter().zip(u) {
            max_in[ui] = max_in[ui].max(zi);
            min_in[ui] = min_in[ui].min(zi);
        }
        for c in 2..n_cat {
            let lo = max_in[c];
            let hi = min_in[c + 1];
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Numerical(format!(
                    "category {} or {} of ordinal outcome {} is empty",
                    c,
                    c + 1,
                    data.continuous.ncols() + k + 1
                )));
            }
            gamma[c] = if hi > lo { rng.random_range(lo..hi) } else { lo };
        }
    }
    Ok(())
}

/// `tr(C^{-1} D^{-1} G D^{-1})` for `D = diag(scale)`.
fn scaled_quadratic(c_inv: &DMatrix<f64>, gram: &DMatrix<f64>, scale: &[f64]) -> f64 {
    let p = scale.len();
    let mut total = 0.0;
    for i in 0..p {
        for j in 0..p {
            total += c_inv[(i, j)] * gram[(i, j)] / (scale[i] * scale[j]);
        }
    }
    total
}

/// Log-scale random-walk Metropolis update of each continuous standard
/// deviation. Returns one acceptance flag per continuous outcome.
pub fn sample_sigmas<R: Rng + ?Sized>(
    state: &mut GroupState,
    data: &GroupData,
    steps: &[f64],
    rng: &mut R,
) -> Result<Vec<bool>> {
    let p1 = state.sigma.len();
    if p1 == 0 {
        return Ok(Vec::new());
    }
    let e = residuals(state, data);
    let gram = e.transpose() * &e;
    let c_inv = linalg::spd_inverse(&state.correlation)?;
    let n = data.len() as f64;
    let p = state.correlation.nrows();
    let mut scale: Vec<f64> = (0..p).map(|j| state.sigma.get(j).copied().unwrap_or(1.0)).collect();
    let log_target = |scale: &[f64], j: usize| -> f64 {
        -(n + 1.0) * scale[j].ln() - 0.5 * scaled_quadratic(&c_inv, &gram, scale)
    };
    let mut accepted = Vec::with_capacity(p1);
    for j in 0..p1 {
        let current = log_target(&scale, j);
        let old = scale[j];
        let proposal = old * (steps[j] * rng.sample::<f64, _>(StandardNormal)).exp();
        scale[j] = proposal;
        let candidate = log_target(&scale, j);
        // the log-normal proposal contributes proposal / old
        let log_ratio = candidate - current + (proposal / old).ln();
        if rng.random::<f64>().ln() < log_ratio {
            accepted.push(true);
        } else {
            scale[j] = old;
            accepted.push(false);
        }
    }
    state.sigma.copy_from_slice(&scale[..p1]);
    Ok(accepted)
}

/// Coefficients `(a, b)` of the expansion kernel `h^m exp(-a h^2 - b h)` for
/// the outcome in column `c`.
pub fn expansion_kernel(e: &DMatrix<f64>, omega: &DMatrix<f64>, c: usize) -> (f64, f64) {
    let n = e.nrows();
    let p = e.ncols();
    let mut sum_sq = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        let eic = e[(i, c)];
        sum_sq += eic * eic;
        let mut other = 0.0;
        for j in 0..p {
            if j != c {
                other += omega[(c, j)] * e[(i, j)];
            }
        }
        cross += eic * other;
    }
    (0.5 * omega[(c, c)] * sum_sq, cross)
}

/// Applies the group action `h` to ordinal outcome `k`: latents, the matching
/// coefficient column and the free thresholds are multiplied by `h`.
pub fn apply_expansion(state: &mut GroupState, p1: usize, k: usize, h: f64) {
    for z in state.latents[k].iter_mut() {
        *z *= h;
    }
    let mut col = state.coefficients.column_mut(p1 + k);
    col *= h;
    let gamma = &mut state.thresholds[k];
    let last = gamma.len() - 1;
    for g in gamma[2..last].iter_mut() {
        *g *= h;
    }
}

/// Scale-expansion move for each ordinal outcome. The scale `h > 0` is
/// proposed on the log scale around the identity and accepted against the
/// kernel `h^{n+Q+K-3} exp(-a h^2 - b h)` (density with respect to `dh`).
/// Returns one acceptance flag per ordinal outcome.
pub fn sample_expansion_scales<R: Rng + ?Sized>(
    state: &mut GroupState,
    data: &GroupData,
    steps: &[f64],
    rng: &mut R,
) -> Result<Vec<bool>> {
    let p1 = data.continuous.ncols();
    let n = data.len() as f64;
    let q = data.covariates.ncols() as f64;
    let mut accepted = Vec::with_capacity(state.latents.len());
    for (k, &step) in steps.iter().enumerate().take(state.latents.len()) {
        let omega = precision(state)?;
        let e = residuals(state, data);
        let (a, b) = expansion_kernel(&e, &omega, p1 + k);
        let n_cat = (state.thresholds[k].len() - 1) as f64;
        let power = n + q + n_cat - 3.0;
        let log_kernel = |h: f64| power * h.ln() - a * h * h - b * h;
        let h = (step * rng.sample::<f64, _>(StandardNormal)).exp();
        let log_ratio = log_kernel(h) + h.ln() - log_kernel(1.0);
        if rng.random::<f64>().ln() < log_ratio {
            apply_expansion(state, p1, k, h);
            accepted.push(true);
        } else {
            accepted.push(false);
        }
    }
    Ok(accepted)
}

fn inverse_normal_cdf(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0)
}

/// Starting state: thresholds and latents from the observed category
/// proportions, least-squares coefficients, identity correlation.
pub fn initial_state<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Result<ParameterState> {
    let spec = data.spec();
    let mut groups = Vec::with_capacity(spec.populations());
    for group in data.groups() {
        let n = group.len();
        let p = spec.outcomes();
        let mut thresholds = Vec::with_capacity(spec.ordinal());
        let mut latents = Vec::with_capacity(spec.ordinal());
        for (k, &n_cat) in spec.categories().iter().enumerate() {
            let mut counts = vec![0usize; n_cat + 1];
            for &u in &group.ordinal[k] {
                counts[u] += 1;
            }
            let mut cum = 0.0;
            let mut cuts = Vec::with_capacity(n_cat);
            for &count in &counts[1..n_cat] {
                cum += count as f64 / n as f64;
                cuts.push(inverse_normal_cdf(cum.clamp(1e-6, 1.0 - 1e-6)));
            }
            let shift = -cuts[0];
            let mut gamma = vec![f64::NEG_INFINITY];
            gamma.extend(cuts.iter().map(|c| c + shift));
            gamma.push(f64::INFINITY);
            gamma[1] = 0.0;
            for c in 2..n_cat {
                if gamma[c] <= gamma[c - 1] {
                    gamma[c] = gamma[c - 1] + 1e-3;
                }
            }
            let z: Vec<f64> = group.ordinal[k]
                .iter()
                .map(|&u| truncnorm::sample(rng, shift, 1.0, gamma[u - 1], gamma[u]))
                .collect();
            thresholds.push(gamma);
            latents.push(z);
        }
        let mut state = GroupState {
            coefficients: DMatrix::zeros(spec.covariates(), p),
            sigma: vec![1.0; spec.continuous()],
            correlation: DMatrix::identity(p, p),
            thresholds,
            latents,
        };
        let cache = GroupCache::new(group)?;
        state.coefficients = &cache.projection * stacked_outcomes(&state, group);
        let e = residuals(&state, group);
        let dof = (n - spec.covariates()) as f64;
        for j in 0..spec.continuous() {
            let s = (e.column(j).norm_squared() / dof).sqrt();
            state.sigma[j] = if s > 0.0 { s } else { 1.0 };
        }
        groups.push(state);
    }
    Ok(ParameterState { groups })
}

/// Acceptance rates of the Metropolis blocks, per population.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AcceptanceRates {
    /// Correlation-matrix step (one entry per population).
    pub correlation: Vec<f64>,
    /// `sigma[g][j]` for continuous outcome `j`.
    pub sigma: Vec<Vec<f64>>,
    /// `expansion[g][k]` for ordinal outcome `k`.
    pub expansion: Vec<Vec<f64>>,
}

/// Retained draws of an unconstrained posterior chain.
#[derive(Clone, Debug)]
pub struct PosteriorChain {
    pub rho: CorrelationSample,
    /// Per draw, per population: `Q x P` coefficients in column-major order.
    pub coefficients: Vec<Vec<DMatrix<f64>>>,
    /// Per draw, per population: continuous standard deviations.
    pub sigmas: Vec<Vec<Vec<f64>>>,
    /// Per draw, per population, per ordinal outcome: full threshold vectors.
    pub thresholds: Vec<Vec<Vec<Vec<f64>>>>,
    pub acceptance: AcceptanceRates,
    /// Number of correlation candidates proposed and accepted, over all iterations.
    pub correlation_proposals: usize,
    pub correlation_accepted: usize,
    pub seed: u64,
    pub stream: u64,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

#[derive(Default, Clone)]
struct Counter {
    tries: usize,
    hits: usize,
}

impl Counter {
    fn record(&mut self, hit: bool) {
        self.tries += 1;
        self.hits += usize::from(hit);
    }

    fn rate(&self) -> f64 {
        if self.tries == 0 {
            0.0
        } else {
            self.hits as f64 / self.tries as f64
        }
    }
}

/// A single chain: state, caches, tuned step sizes and RNG.
pub struct Sampler<'a> {
    data: &'a Dataset,
    config: ChainConfig,
    caches: Vec<GroupCache>,
    state: ParameterState,
    sigma_steps: Vec<Vec<f64>>,
    expansion_steps: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    stream: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, config: ChainConfig, stream: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        let caches = data.groups().iter().map(GroupCache::new).collect::<Result<Vec<_>>>()?;
        let state = initial_state(data, &mut rng)?;
        let spec = data.spec();
        let sigma_steps = vec![vec![config.sigma_step; spec.continuous()]; spec.populations()];
        let expansion_steps = vec![vec![config.expansion_step; spec.ordinal()]; spec.populations()];
        Ok(Sampler {
            data,
            config,
            caches,
            state,
            sigma_steps,
            expansion_steps,
            rng,
            stream,
        })
    }

    pub fn state(&self) -> &ParameterState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ParameterState {
        &mut self.state
    }

    fn iterate(
        &mut self,
        corr: &mut [Counter],
        sigma: &mut [Vec<Counter>],
        expansion: &mut [Vec<Counter>],
    ) -> Result<()> {
        for (g, group) in self.data.groups().iter().enumerate() {
            let state = &mut self.state.groups[g];
            let rng = &mut self.rng;
            sample_latents(state, group, rng)?;
            sample_coefficients(state, group, &self.caches[g], rng)?;
            corr[g].record(sample_correlation_matrix(state, group, rng)?);
            sample_thresholds(state, group, rng)?;
            for (c, hit) in sigma[g].iter_mut().zip(sample_sigmas(state, group, &self.sigma_steps[g], rng)?) {
                c.record(hit);
            }
            if self.config.expansion {
                let hits = sample_expansion_scales(state, group, &self.expansion_steps[g], rng)?;
                for (c, hit) in expansion[g].iter_mut().zip(hits) {
                    c.record(hit);
                }
            }
        }
        Ok(())
    }

    fn diagnostic(&self, iteration: usize, err: Error) -> Error {
        let summary: Vec<String> = self
            .state
            .groups
            .iter()
            .enumerate()
            .map(|(g, s)| {
                format!(
                    "population {}: sigma={:?} rho={:?} thresholds={:?}",
                    g + 1,
                    s.sigma,
                    {
                        let mut v = Vec::new();
                        crate::model::pack_lower(&s.correlation, &mut v);
                        v
                    },
                    s.thresholds
                )
            })
            .collect();
        Error::Numerical(format!(
            "chain (seed {}, stream {}) failed at iteration {iteration}: {err}; state: {}",
            self.config.seed,
            self.stream,
            summary.join("; ")
        ))
    }

    /// Runs burn-in (with step-size adaptation) and the retained iterations.
    pub fn run(mut self) -> Result<PosteriorChain> {
        let spec = self.data.spec();
        let n_groups = spec.populations();
        let layout = spec.rho_layout();

        let mut corr_total = vec![Counter::default(); n_groups];
        let mut sigma_window = vec![vec![Counter::default(); spec.continuous()]; n_groups];
        let mut exp_window = vec![vec![Counter::default(); spec.ordinal()]; n_groups];

        for it in 0..self.config.burn_in {
            self.iterate(&mut corr_total, &mut sigma_window, &mut exp_window)
                .map_err(|e| self.diagnostic(it, e))?;
            if (it + 1) % ADAPT_WINDOW == 0 {
                adapt(&mut self.sigma_steps, &mut sigma_window);
                adapt(&mut self.expansion_steps, &mut exp_window);
            }
        }

        let mut sigma_kept = vec![vec![Counter::default(); spec.continuous()]; n_groups];
        let mut exp_kept = vec![vec![Counter::default(); spec.ordinal()]; n_groups];
        let total = self.config.draws * self.config.thin;
        let mut rho = Vec::with_capacity(self.config.draws * layout.len());
        let mut coefficients = Vec::with_capacity(self.config.draws);
        let mut sigmas = Vec::with_capacity(self.config.draws);
        let mut thresholds = Vec::with_capacity(self.config.draws);
        for it in 0..total {
            self.iterate(&mut corr_total, &mut sigma_kept, &mut exp_kept)
                .map_err(|e| self.diagnostic(self.config.burn_in + it, e))?;
            if (it + 1) % self.config.thin == 0 {
                rho.extend(self.state.rho());
                coefficients.push(self.state.groups.iter().map(|g| g.coefficients.clone()).collect());
                sigmas.push(self.state.groups.iter().map(|g| g.sigma.clone()).collect());
                thresholds.push(self.state.groups.iter().map(|g| g.thresholds.clone()).collect());
            }
        }
        let acceptance = AcceptanceRates {
            correlation: corr_total.iter().map(Counter::rate).collect(),
            sigma: sigma_kept.iter().map(|v| v.iter().map(Counter::rate).collect()).collect(),
            expansion: exp_kept.iter().map(|v| v.iter().map(Counter::rate).collect()).collect(),
        };
        Ok(PosteriorChain {
            rho: CorrelationSample::new(layout, rho, Provenance::Posterior)?,
            coefficients,
            sigmas,
            thresholds,
            acceptance,
            correlation_proposals: corr_total.iter().map(|c| c.tries).sum(),
            correlation_accepted: corr_total.iter().map(|c| c.hits).sum(),
            seed: self.config.seed,
            stream: self.stream,
        })
    }
}

fn adapt(steps: &mut [Vec<f64>], window: &mut [Vec<Counter>]) {
    for (group_steps, group_window) in steps.iter_mut().zip(window.iter_mut()) {
        for (step, counter) in group_steps.iter_mut().zip(group_window.iter_mut()) {
            if counter.tries > 0 {
                *step = (*step * (2.0 * (counter.rate() - TARGET_ACCEPTANCE)).exp()).clamp(1e-4, 5.0);
            }
            *counter = Counter::default();
        }
    }
}

/// Runs one chain on stream 0 of `config.seed`.
pub fn run_chain(data: &Dataset, config: &ChainConfig) -> Result<PosteriorChain> {
    Sampler::new(data, config.clone(), 0)?.run()
}

/// Runs `chains` independent chains in parallel, each on its own RNG stream.
pub fn run_chains(data: &Dataset, config: &ChainConfig, chains: usize) -> Result<Vec<PosteriorChain>> {
    if chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    (0..chains as u64)
        .into_par_iter()
        .map(|stream| Sampler::new(data, config.clone(), stream)?.run())
        .collect()
}

/// Concatenates the retained correlation draws of several chains.
pub fn pool_rho(chains: &[PosteriorChain]) -> Result<CorrelationSample> {
    let first = chains
        .first()
        .ok_or_else(|| Error::Config("no chains to pool".into()))?;
    let layout = first.rho.layout();
    let values: Vec<f64> = chains.iter().flat_map(|c| c.rho.rows().flatten().copied()).collect();
    CorrelationSample::new(layout, values, Provenance::Posterior)
}

/// Sample mean and covariance of a set of draws, as a convenience for diagnostics.
pub fn draw_moments(sample: &CorrelationSample) -> (DVector<f64>, DMatrix<f64>) {
    let (m, c, _) = linalg::sample_moments(sample.rows(), sample.width());
    (m, c)
}
