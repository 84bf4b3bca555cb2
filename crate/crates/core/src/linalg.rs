//! Small dense symmetric solves (dimension a handful of covariates).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number beyond which a ridge is added before inverting.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Ridge magnitude relative to the mean diagonal entry.
pub const RIDGE_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedInverse {
    pub matrix: DMatrix<f64>,
    /// Ridge added to the diagonal, if the matrix was ill-conditioned.
    pub ridge: Option<f64>,
}

/// Sample covariance (denominator `m - 1`) of the rows of a row-major `m x p` array.
pub fn sample_covariance(values: &[f64], m: usize, p: usize) -> DMatrix<f64> {
    let mut mean = vec![0.0; p];
    for row in values.chunks_exact(p) {
        for (acc, x) in mean.iter_mut().zip(row) {
            *acc += x;
        }
    }
    for x in &mut mean {
        *x /= m as f64;
    }
    let mut cov = DMatrix::zeros(p, p);
    for row in values.chunks_exact(p) {
        for a in 0..p {
            let da = row[a] - mean[a];
            for b in a..p {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / (m as f64 - 1.0);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// Inverts a symmetric positive semi-definite matrix, adding a ridge of
/// `RIDGE_SCALE * trace / p` when it is singular or its condition number
/// exceeds `CONDITION_LIMIT`. `names` label the dimensions in errors.
pub fn regularized_inverse(a: &DMatrix<f64>, names: &[String]) -> Result<RegularizedInverse> {
    let p = a.nrows();
    let name = |k: usize| names.get(k).cloned().unwrap_or_else(|| format!("#{k}"));
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Covariates("non-finite entry in covariance".into()));
    }
    let trace = a.trace();
    if trace <= 0.0 {
        let k = (0..p).find(|&k| a[(k, k)] <= 0.0).unwrap_or(0);
        return Err(Error::DegenerateCovariance(name(k)));
    }
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |acc, &l| acc.min(l));
    let ill_conditioned = min <= 0.0 || max / min > CONDITION_LIMIT;

    let (target, ridge) = if ill_conditioned {
        let ridge = RIDGE_SCALE * trace / p as f64;
        let mut shifted = a.clone();
        for k in 0..p {
            shifted[(k, k)] += ridge;
        }
        let worst = (0..p).min_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)])).unwrap_or(0);
        log::debug!(
            "covariance is numerically singular (condition {:.3e}); adding ridge {ridge:.3e} (smallest variance: `{}`)",
            max / min.max(f64::MIN_POSITIVE),
            name(worst)
        );
        (shifted, Some(ridge))
    } else {
        (a.clone(), None)
    };

    let chol = target.clone().cholesky().ok_or_else(|| {
        let worst = (0..p).min_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)])).unwrap_or(0);
        Error::DegenerateCovariance(name(worst))
    })?;
    let mut inv = chol.inverse();
    for r in 0..p {
        for c in r + 1..p {
            let v = 0.5 * (inv[(r, c)] + inv[(c, r)]);
            inv[(r, c)] = v;
            inv[(c, r)] = v;
        }
    }
    Ok(RegularizedInverse { matrix: inv, ridge })
}

/// Residual sum of squares of the least-squares fit of `y` on the columns of
/// `design`, via the (ridge-regularized) normal equations.
pub fn least_squares_rss(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let gram = design.transpose() * design;
    let names: Vec<String> = (0..design.ncols()).map(|k| format!("regressor {k}")).collect();
    let inv = regularized_inverse(&gram, &names)?;
    let coef = &inv.matrix * (design.transpose() * y);
    let fitted = design * coef;
    Ok((y - fitted).norm_squared())
}

/// `x' A x` for a symmetric `A`.
pub fn quadratic_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let p = x.len();
    let mut total = 0.0;
    for r in 0..p {
        let mut row = 0.0;
        for c in 0..p {
            row += a[(r, c)] * x[c];
        }
        total += x[r] * row;
    }
    total
}
