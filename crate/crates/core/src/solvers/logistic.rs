use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_binary, check_rows, log1p_exp, sigmoid, LinearModel, Link, Standardization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    pub ridge_eps: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            ridge_eps: 1e-6,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

struct Problem<'a> {
    z: &'a DMatrix<f64>,
    y: &'a [f64],
    eps: f64,
}

impl Problem<'_> {
    fn eta(&self, b0: f64, b: &DVector<f64>) -> DVector<f64> {
        let mut eta = self.z * b;
        eta.add_scalar_mut(b0);
        eta
    }

    /// Mean log-likelihood minus `(ε/2)‖b‖²`.
    fn objective(&self, eta: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let n = self.y.len() as f64;
        let ll: f64 = eta.iter().zip(self.y).map(|(&e, &y)| y * e - log1p_exp(e)).sum();
        ll / n - 0.5 * self.eps * b.norm_squared()
    }

    /// Gradient over `(b₀, b)`.
    fn gradient(&self, eta: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = self.y.len() as f64;
        let resid = DVector::from_iterator(self.y.len(), eta.iter().zip(self.y).map(|(&e, &y)| y - sigmoid(e)));
        let d = b.len();
        let mut g = DVector::zeros(d + 1);
        g[0] = resid.sum() / n;
        let zg = self.z.tr_mul(&resid) / n;
        for j in 0..d {
            g[j + 1] = zg[j] - self.eps * b[j];
        }
        g
    }

    fn neg_hessian(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let (n, d) = self.z.shape();
        let w: Vec<f64> = eta.iter().map(|&e| {
            let p = sigmoid(e);
            p * (1.0 - p)
        }).collect();
        let mut h = DMatrix::zeros(d + 1, d + 1);
        let mut wz = self.z.clone();
        for j in 0..d {
            for i in 0..n {
                wz[(i, j)] *= w[i];
            }
        }
        h[(0, 0)] = w.iter().sum::<f64>();
        for j in 0..d {
            let s = wz.column(j).sum();
            h[(0, j + 1)] = s;
            h[(j + 1, 0)] = s;
        }
        let zwz = self.z.tr_mul(&wz);
        h.view_mut((1, 1), (d, d)).copy_from(&zwz);
        h /= n as f64;
        for j in 0..d {
            h[(j + 1, j + 1)] += self.eps;
        }
        h
    }
}

/// Ridge-stabilized logistic regression by Newton's method (IRLS) with step
/// halving, maximizing the mean log-likelihood minus `(ε/2)‖b‖²` over
/// standardized coefficients `b`. The intercept is unpenalized.
pub fn fit_logistic_irls(features: &DMatrix<f64>, labels: &[f64], opts: &IrlsOptions) -> Result<LinearModel> {
    check_rows(features, labels)?;
    check_binary(labels)?;
    if !(opts.ridge_eps >= 0.0) {
        return Err(Error::Domain { what: "ridge_eps", value: opts.ridge_eps });
    }
    let std = Standardization::new(features)?;
    let problem = Problem { z: &std.z, y: labels, eps: opts.ridge_eps };
    let d = std.kept.len();

    let ybar = labels.iter().sum::<f64>() / labels.len() as f64;
    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut b = DVector::zeros(d);
    let mut eta = problem.eta(b0, &b);
    let mut obj = problem.objective(&eta, &b);
    let mut grad = problem.gradient(&eta, &b);
    let mut iterations = 0;

    while grad.norm() > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::Convergence { iterations, residual: grad.norm() });
        }
        iterations += 1;
        let h = problem.neg_hessian(&eta);
        let step = match h.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => h.lu().solve(&grad).ok_or(Error::Singular)?,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nb0 = b0 + t * step[0];
            let nb = &b + step.rows(1, d) * t;
            let neta = problem.eta(nb0, &nb);
            let nobj = problem.objective(&neta, &nb);
            if nobj >= obj {
                b0 = nb0;
                b = nb;
                eta = neta;
                obj = nobj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = problem.gradient(&eta, &b);
        if !accepted {
            // No ascent at machine precision: the current point is as good as it gets.
            if grad.norm() > opts.tol {
                return Err(Error::Convergence { iterations, residual: grad.norm() });
            }
        }
    }

    let b_vec: Vec<f64> = b.iter().copied().collect();
    Ok(LinearModel::from_standardized(b0, &b_vec, &std, Link::Logit, iterations, grad.norm()))
}

/// Gradient norm of the penalized objective at `model`, recomputed from scratch.
pub fn logistic_gradient_norm(features: &DMatrix<f64>, labels: &[f64], model: &LinearModel, ridge_eps: f64) -> Result<f64> {
    check_rows(features, labels)?;
    let std = Standardization::new(features)?;
    let b = DVector::from_iterator(std.kept.len(), std.kept.iter().map(|&j| model.coefficients[j] * std.scale[j]));
    let b0 = model.intercept + std.kept.iter().map(|&j| model.coefficients[j] * std.mean[j]).sum::<f64>();
    let problem = Problem { z: &std.z, y: labels, eps: ridge_eps };
    let eta = problem.eta(b0, &b);
    Ok(problem.gradient(&eta, &b).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_features_balanced_labels() {
        let x = DMatrix::zeros(6, 2);
        let y = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let m = fit_logistic_irls(&x, &y, &IrlsOptions::default()).unwrap();
        assert!(m.intercept.abs() < 1e-12);
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn separable_data_stays_finite() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let m = fit_logistic_irls(&x, &y, &IrlsOptions::default()).unwrap();
        assert!(m.coefficients[0].is_finite() && m.coefficients[0] > 0.0);
        assert!(m.residual <= 1e-8);
        assert!(logistic_gradient_norm(&x, &y, &m, 1e-6).unwrap() <= 1e-8);
    }

    #[test]
    fn recovers_generating_coefficients() {
        let mut r = rng::rng_from_seed(17);
        let n = 20_000;
        let x = DMatrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut r));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let p = sigmoid(-0.5 + 1.5 * x[(i, 0)] - x[(i, 1)]);
                f64::from(u8::from(r.random::<f64>() < p))
            })
            .collect();
        let m = fit_logistic_irls(&x, &y, &IrlsOptions::default()).unwrap();
        assert!((m.intercept + 0.5).abs() < 0.08);
        assert!((m.coefficients[0] - 1.5).abs() < 0.08);
        assert!((m.coefficients[1] + 1.0).abs() < 0.08);
        assert!(m.residual <= 1e-8);
    }

    #[test]
    fn label_validation() {
        let x = DMatrix::zeros(3, 1);
        assert!(matches!(
            fit_logistic_irls(&x, &[1.0, 1.0, 1.0], &IrlsOptions::default()),
            Err(Error::DegenerateLabels)
        ));
        assert!(matches!(
            fit_logistic_irls(&x, &[1.0, 0.5, 0.0], &IrlsOptions::default()),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 1.0, 0.0, 1.0];
        let opts = IrlsOptions { max_iter: 0, ..IrlsOptions::default() };
        assert!(matches!(fit_logistic_irls(&x, &y, &opts), Err(Error::Convergence { .. })));
    }

    #[test]
    fn invariant_to_feature_rescaling() {
        let mut r = rng::rng_from_seed(2);
        let x = DMatrix::from_fn(300, 3, |_, _| StandardNormal.sample(&mut r));
        let y: Vec<f64> = (0..300).map(|i| f64::from(u8::from(x[(i, 0)] + 0.7 * rng::std_normal(&mut r) > 0.0))).collect();
        let scaled = DMatrix::from_fn(300, 3, |i, j| 10.0 * x[(i, j)] - 4.0 + j as f64);
        let a = fit_logistic_irls(&x, &y, &IrlsOptions::default()).unwrap();
        let b = fit_logistic_irls(&scaled, &y, &IrlsOptions::default()).unwrap();
        for i in 0..300 {
            let pa = a.predict(&x.row(i).iter().copied().collect::<Vec<_>>());
            let pb = b.predict(&scaled.row(i).iter().copied().collect::<Vec<_>>());
            assert!((pa - pb).abs() < 1e-8);
        }
    }
}
