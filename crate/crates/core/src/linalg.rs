//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute asymmetry allowed before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

pub fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Numerical(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if !(gap <= SYMMETRY_TOLERANCE * (1.0 + a[(i, j)].abs())) {
                return Err(Error::Asymmetric {
                    row: i,
                    col: j,
                    gap,
                });
            }
        }
    }
    Ok(())
}

/// Lower Cholesky factor; fails if the matrix is not numerically positive definite.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite("cannot invert matrix".into()))
}

/// Square root `M` with `M M' = A` for a symmetric positive semi-definite `A`.
///
/// Uses Cholesky when it succeeds and falls back to the eigen decomposition with
/// negative eigenvalues clamped to zero, so rank-deficient covariances still work.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = a.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = a.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-8 * scale) {
        return Err(Error::NotPositiveDefinite(
            "covariance has a negative eigenvalue".into(),
        ));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Log density of `N(mean, cov)` at `x`.
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("singular covariance in normal density".into()))?;
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let quad = diff.dot(&solved);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let k = x.len() as f64;
    Ok(-0.5 * (k * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}

/// Mean and unbiased covariance of the rows of `rows` (each inner slice is one draw).
pub fn sample_moments<'a, I>(rows: I, dim: usize) -> (DVector<f64>, DMatrix<f64>, usize)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut n = 0usize;
    let mut mean = DVector::zeros(dim);
    let mut m2 = DMatrix::zeros(dim, dim);
    // Welford update
    for row in rows {
        n += 1;
        let x = DVector::from_column_slice(row);
        let delta = &x - &mean;
        mean += &delta / n as f64;
        let delta2 = &x - &mean;
        m2 += &delta * delta2.transpose();
    }
    let cov = if n > 1 {
        m2 / (n as f64 - 1.0)
    } else {
        DMatrix::zeros(dim, dim)
    };
    (mean, (&cov + cov.transpose()) * 0.5, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psd_sqrt_handles_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let m = psd_sqrt(&a).unwrap();
        let back = &m * m.transpose();
        for (x, y) in back.iter().zip(a.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_normal_density() {
        let x = DVector::from_vec(vec![0.0]);
        let ld = mvn_log_density(&x, &x, &DMatrix::identity(1, 1)).unwrap();
        assert_relative_eq!(ld.exp(), 1.0 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn moments_of_small_sample() {
        let rows: Vec<[f64; 2]> = vec![[1.0, 2.0], [3.0, 2.0], [5.0, 5.0]];
        let (m, c, n) = sample_moments(rows.iter().map(|r| &r[..]), 2);
        assert_eq!(n, 3);
        assert_relative_eq!(m[0], 3.0);
        assert_relative_eq!(m[1], 3.0);
        assert_relative_eq!(c[(0, 0)], 4.0);
        assert_relative_eq!(c[(0, 1)], 3.0);
        assert_relative_eq!(c[(1, 1)], 3.0);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(matches!(check_symmetric(&a), Err(Error::Asymmetric { .. })));
    }
}
