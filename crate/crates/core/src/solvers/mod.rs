//! Numerical core: IRLS logistic regression, coordinate-descent lasso,
//! OLS/ridge and stability selection.
//!
//! Penalized fits work on standardized columns (mean 0, population standard
//! deviation 1); reported models always carry coefficients on the original
//! feature scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod lasso;
pub mod logistic;
pub mod ols;
pub mod stability;

pub use lasso::{
    fit_lasso_cd, lambda_max, lasso_cv, lasso_kkt_residual, lasso_objective, lasso_path, Family, LassoCv,
    LassoOptions, LassoPath,
};
pub use logistic::{fit_logistic_irls, logistic_gradient_norm, IrlsOptions};
pub use ols::fit_ols;
pub use stability::{stability_selection, StabilityOptions, StabilitySelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
}

/// An affine predictor composed with a link inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub link: Link,
    /// Column means used for standardization.
    pub feature_mean: Vec<f64>,
    /// Column scales used for standardization; 0 marks a dropped constant column.
    pub feature_scale: Vec<f64>,
    pub iterations: usize,
    /// Final optimality residual (gradient norm for IRLS, KKT residual for lasso).
    pub residual: f64,
}

impl LinearModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    /// Mean response (identity link) or success probability (logit link).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.linear_predictor(x);
        match self.link {
            Link::Identity => eta,
            Link::Logit => sigmoid(eta),
        }
    }

    pub fn predict_rows(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (0..features.nrows())
            .map(|i| {
                let row: Vec<f64> = features.row(i).iter().copied().collect();
                self.predict(&row)
            })
            .collect()
    }

    /// Indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Coefficients on the standardized scale, `b_j = β_j · scale_j`.
    pub fn standardized_coefficients(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.feature_scale).map(|(b, s)| b * s).collect()
    }

    pub(crate) fn from_standardized(
        b0: f64,
        b: &[f64],
        std: &Standardization,
        link: Link,
        iterations: usize,
        residual: f64,
    ) -> Self {
        let mut coefficients = vec![0.0; std.mean.len()];
        let mut intercept = b0;
        for (k, &j) in std.kept.iter().enumerate() {
            coefficients[j] = b[k] / std.scale[j];
            intercept -= coefficients[j] * std.mean[j];
        }
        Self {
            intercept,
            coefficients,
            link,
            feature_mean: std.mean.clone(),
            feature_scale: std.scale.clone(),
            iterations,
            residual,
        }
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^η)` without overflow.
pub fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Column statistics and the standardized design over non-constant columns.
#[derive(Debug, Clone)]
pub(crate) struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub kept: Vec<usize>,
    /// Standardized design restricted to `kept`, column-major.
    pub z: DMatrix<f64>,
}

impl Standardization {
    pub fn new(features: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = features.shape();
        if n == 0 {
            return Err(Error::EmptyInput("feature matrix"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "feature value",
                value: features.iter().copied().find(|v| !v.is_finite()).unwrap_or(f64::NAN),
            });
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        let mut kept = Vec::with_capacity(d);
        for j in 0..d {
            let col = features.column(j);
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            mean[j] = mu;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + mu.abs()) {
                scale[j] = sd;
                kept.push(j);
            } else {
                log::warn!("dropping constant feature column {j}");
            }
        }
        let mut z = DMatrix::zeros(n, kept.len());
        for (k, &j) in kept.iter().enumerate() {
            let src = features.column(j);
            let mut dst = z.column_mut(k);
            for i in 0..n {
                dst[i] = (src[i] - mean[j]) / scale[j];
            }
        }
        Ok(Self { mean, scale, kept, z })
    }
}

pub(crate) fn check_rows(features: &DMatrix<f64>, targets: &[f64]) -> Result<()> {
    if features.nrows() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows but {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if features.nrows() == 0 {
        return Err(Error::EmptyInput("training rows"));
    }
    if let Some(&v) = targets.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain { what: "target value", value: v });
    }
    Ok(())
}

pub(crate) fn check_binary(labels: &[f64]) -> Result<()> {
    if let Some(&v) = labels.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidLabel(v));
    }
    let ones = labels.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

/// Rows of `features` selected by `idx`.
pub fn select_rows(features: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), features.ncols(), |i, j| features[(idx[i], j)])
}

/// Columns of `features` selected by `idx`.
pub fn select_columns(features: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(features.nrows(), idx.len(), |i, j| features[(i, idx[j])])
}

/// Builds a row-major matrix from point rows.
pub fn matrix_from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, |r| r.as_ref().len());
    if let Some(bad) = rows.iter().position(|r| r.as_ref().len() != d) {
        return Err(Error::Dimension(format!(
            "row {bad} has {} entries, expected {d}",
            rows[bad].as_ref().len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i].as_ref()[j]))
}
