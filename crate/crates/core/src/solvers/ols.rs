use nalgebra::{DMatrix, DVector};

use super::{check_rows, LinearModel, Link};
use crate::error::{Error, Result};

/// Least squares with an unpenalized intercept,
/// `min ‖y − b₀ − Xβ‖² + ridge·‖β‖²`, solved by a QR factorization of the
/// centered design stacked on `√ridge·I`.
pub fn fit_ols(features: &DMatrix<f64>, targets: &[f64], ridge: f64) -> Result<LinearModel> {
    check_rows(features, targets)?;
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Domain { what: "ridge", value: ridge });
    }
    let (n, d) = features.shape();
    let mean: Vec<f64> = (0..d).map(|j| features.column(j).sum() / n as f64).collect();
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    if d == 0 {
        return Ok(LinearModel {
            intercept: y_mean,
            coefficients: Vec::new(),
            link: Link::Identity,
            feature_mean: mean,
            feature_scale: Vec::new(),
            iterations: 0,
            residual: 0.0,
        });
    }
    if ridge == 0.0 && n < d + 1 {
        return Err(Error::Singular);
    }

    let rows = if ridge > 0.0 { n + d } else { n };
    let mut a = DMatrix::zeros(rows, d);
    let mut rhs = DVector::zeros(rows);
    for i in 0..n {
        for j in 0..d {
            a[(i, j)] = features[(i, j)] - mean[j];
        }
        rhs[i] = targets[i] - y_mean;
    }
    if ridge > 0.0 {
        let root = ridge.sqrt();
        for j in 0..d {
            a[(n + j, j)] = root;
        }
    }

    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..d).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..d).any(|j| r[(j, j)].abs() <= 1e-10 * max_diag) {
        return Err(Error::Singular);
    }
    let qty = qr.q().transpose() * rhs;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::Singular)?;

    let intercept = y_mean - beta.iter().zip(&mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients: beta.iter().copied().collect(),
        link: Link::Identity,
        feature_mean: mean,
        feature_scale: vec![1.0; d],
        iterations: 1,
        residual: 0.0,
    })
}
