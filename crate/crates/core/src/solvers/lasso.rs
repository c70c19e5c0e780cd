//! Coordinate-descent lasso for the linear and logistic families.
//!
//! The penalized objective on standardized columns `z_j` is
//! `(1/2N)‖y − b₀ − Zb‖² + λ‖b‖₁` (linear) or
//! `(1/N)Σ[log(1 + e^η) − yη] + λ‖b‖₁` (logistic). The logistic family is
//! solved by proximal Newton: each outer step runs weighted coordinate
//! descent on the quadratic model and then backtracks on the true objective.
//! Both use an active-set strategy: cycle over nonzero coordinates until
//! they settle, then one full sweep to admit violators.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_binary, check_rows, log1p_exp, select_rows, sigmoid, LinearModel, Link, Standardization};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

impl Family {
    fn link(self) -> Link {
        match self {
            Family::Linear => Link::Identity,
            Family::Logistic => Link::Logit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// KKT tolerance on the standardized scores.
    pub tol: f64,
    /// Cap on coordinate sweeps (full or active-set).
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_sweeps: 10_000 }
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

fn violation(g: f64, b: f64, lambda: f64) -> f64 {
    if b == 0.0 {
        (g.abs() - lambda).max(0.0)
    } else {
        (g - lambda * b.signum()).abs()
    }
}

struct Solver<'a> {
    z: &'a DMatrix<f64>,
    y: &'a [f64],
    family: Family,
    opts: LassoOptions,
    sweeps: usize,
}

impl<'a> Solver<'a> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn col(&self, j: usize) -> &'a [f64] {
        let n = self.n();
        &self.z.as_slice()[j * n..(j + 1) * n]
    }

    fn eta(&self, b0: f64, b: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n()];
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                for (e, &zij) in eta.iter_mut().zip(self.col(j)) {
                    *e += bj * zij;
                }
            }
        }
        eta
    }

    /// Loss gradient residual `y − μ(η)`.
    fn residual(&self, eta: &[f64]) -> Vec<f64> {
        match self.family {
            Family::Linear => self.y.iter().zip(eta).map(|(y, e)| y - e).collect(),
            Family::Logistic => self.y.iter().zip(eta).map(|(y, &e)| y - sigmoid(e)).collect(),
        }
    }

    /// Max KKT violation over the intercept and all coordinates.
    fn kkt(&self, resid: &[f64], b: &[f64], lambda: f64) -> f64 {
        let n = self.n() as f64;
        let mut worst = (resid.iter().sum::<f64>() / n).abs();
        for (j, &bj) in b.iter().enumerate() {
            let g = dot(self.col(j), resid) / n;
            worst = worst.max(violation(g, bj, lambda));
        }
        worst
    }

    fn loss(&self, eta: &[f64]) -> f64 {
        let n = self.n() as f64;
        match self.family {
            Family::Linear => self.y.iter().zip(eta).map(|(y, e)| (y - e).powi(2)).sum::<f64>() / (2.0 * n),
            Family::Logistic => self.y.iter().zip(eta).map(|(&y, &e)| log1p_exp(e) - y * e).sum::<f64>() / n,
        }
    }

    fn bump_sweeps(&mut self, residual: f64) -> Result<()> {
        self.sweeps += 1;
        if self.sweeps > self.opts.max_sweeps {
            return Err(Error::Convergence {
                iterations: self.sweeps - 1,
                residual,
            });
        }
        Ok(())
    }

    /// Weighted coordinate descent on `(1/2N)Σ w_i (q_i − Δ₀ − z_iᵀΔ)² + λ‖c‖₁`.
    /// Carries `v = w·q` rather than the working residual `q`, which blows
    /// up where the weights vanish; updates `v`, `c0`, `c` in place until a
    /// full sweep sees no violation above `tol`.
    fn weighted_cd(&mut self, w: &[f64], v: &mut [f64], c0: &mut f64, c: &mut [f64], lambda: f64, tol: f64) -> Result<()> {
        let n = self.n() as f64;
        let d = c.len();
        let w_sum: f64 = w.iter().sum();
        let denom: Vec<f64> = (0..d)
            .map(|j| self.col(j).iter().zip(w).map(|(z, w)| w * z * z).sum::<f64>() / n)
            .collect();
        let mut worst = f64::INFINITY;
        loop {
            // Full sweep.
            self.bump_sweeps(worst)?;
            worst = 0.0;
            let g0 = v.iter().sum::<f64>();
            worst = worst.max((g0 / n).abs());
            let delta0 = g0 / w_sum;
            *c0 += delta0;
            v.iter_mut().zip(w).for_each(|(v, w)| *v -= delta0 * w);
            for j in 0..d {
                if denom[j] <= 0.0 {
                    continue;
                }
                let zj = self.col(j);
                let g = dot(zj, v) / n;
                worst = worst.max(violation(g, c[j], lambda));
                let new = soft_threshold(g + denom[j] * c[j], lambda) / denom[j];
                let step = new - c[j];
                if step != 0.0 {
                    for ((vi, &zij), wi) in v.iter_mut().zip(zj).zip(w) {
                        *vi -= step * zij * wi;
                    }
                    c[j] = new;
                }
            }
            if worst <= tol {
                return Ok(());
            }

            // Active-set sweeps.
            let active: Vec<usize> = (0..d).filter(|&j| c[j] != 0.0).collect();
            loop {
                self.bump_sweeps(worst)?;
                let mut inner = 0.0f64;
                let g0 = v.iter().sum::<f64>();
                inner = inner.max((g0 / n).abs());
                let delta0 = g0 / w_sum;
                *c0 += delta0;
                v.iter_mut().zip(w).for_each(|(v, w)| *v -= delta0 * w);
                for &j in &active {
                    let zj = self.col(j);
                    let g = dot(zj, v) / n;
                    inner = inner.max(violation(g, c[j], lambda));
                    let new = soft_threshold(g + denom[j] * c[j], lambda) / denom[j];
                    let step = new - c[j];
                    if step != 0.0 {
                        for ((vi, &zij), wi) in v.iter_mut().zip(zj).zip(w) {
                            *vi -= step * zij * wi;
                        }
                        c[j] = new;
                    }
                }
                if inner <= 0.1 * tol {
                    break;
                }
            }
        }
    }

    fn solve(&mut self, lambda: f64, b0: &mut f64, b: &mut [f64]) -> Result<f64> {
        match self.family {
            Family::Linear => self.solve_linear(lambda, b0, b),
            Family::Logistic => self.solve_logistic(lambda, b0, b),
        }
    }

    fn solve_linear(&mut self, lambda: f64, b0: &mut f64, b: &mut [f64]) -> Result<f64> {
        let w = vec![1.0; self.n()];
        let mut inner_tol = 0.5 * self.opts.tol;
        loop {
            let eta = self.eta(*b0, b);
            let mut q = self.residual(&eta);
            let kkt = self.kkt(&q, b, lambda);
            if kkt <= self.opts.tol {
                return Ok(kkt);
            }
            self.weighted_cd(&w, &mut q, b0, b, lambda, inner_tol)?;
            inner_tol *= 0.1;
        }
    }

    fn solve_logistic(&mut self, lambda: f64, b0: &mut f64, b: &mut [f64]) -> Result<f64> {
        let n = self.n() as f64;
        loop {
            let eta = self.eta(*b0, b);
            let resid = self.residual(&eta);
            let kkt = self.kkt(&resid, b, lambda);
            if kkt <= self.opts.tol {
                return Ok(kkt);
            }
            let w: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let p = sigmoid(e);
                    (p * (1.0 - p)).max(1e-10)
                })
                .collect();
            let mut v = resid.clone();
            let mut c0 = *b0;
            let mut c = b.to_vec();
            let inner_tol = (0.01 * kkt).max(0.1 * self.opts.tol).min(0.1 * kkt);
            self.weighted_cd(&w, &mut v, &mut c0, &mut c, lambda, inner_tol)?;

            let d0 = c0 - *b0;
            let dir: Vec<f64> = c.iter().zip(b.iter()).map(|(c, b)| c - b).collect();
            let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
            let f_old = self.loss(&eta) + lambda * l1(b);
            let slope = -(resid.iter().sum::<f64>() * d0
                + dir.iter().enumerate().map(|(j, dj)| dj * dot(self.col(j), &resid)).sum::<f64>())
                / n
                + lambda * (l1(&c) - l1(b));
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let nb0 = *b0 + t * d0;
                let nb: Vec<f64> = b.iter().zip(&dir).map(|(b, d)| b + t * d).collect();
                let f_new = self.loss(&self.eta(nb0, &nb)) + lambda * l1(&nb);
                if f_new <= f_old + 1e-4 * t * slope.min(0.0) {
                    *b0 = nb0;
                    b.copy_from_slice(&nb);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(Error::Convergence {
                    iterations: self.sweeps,
                    residual: kkt,
                });
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate(features: &DMatrix<f64>, targets: &[f64], family: Family) -> Result<Standardization> {
    check_rows(features, targets)?;
    if family == Family::Logistic {
        check_binary(targets)?;
    }
    Standardization::new(features)
}

fn initial_intercept(targets: &[f64], family: Family) -> f64 {
    let ybar = targets.iter().sum::<f64>() / targets.len() as f64;
    match family {
        Family::Linear => ybar,
        Family::Logistic => (ybar / (1.0 - ybar)).ln(),
    }
}

fn lambda_max_std(std: &Standardization, targets: &[f64]) -> f64 {
    let n = targets.len();
    let ybar = targets.iter().sum::<f64>() / n as f64;
    (0..std.kept.len())
        .map(|k| {
            let col = &std.z.as_slice()[k * n..(k + 1) * n];
            col.iter().zip(targets).map(|(z, y)| z * (y - ybar)).sum::<f64>().abs() / n as f64
        })
        .fold(0.0, f64::max)
}

/// Smallest penalty with an all-zero solution, `max_j |z_jᵀ(y − ȳ)| / N`.
pub fn lambda_max(features: &DMatrix<f64>, targets: &[f64], family: Family) -> Result<f64> {
    let std = validate(features, targets, family)?;
    Ok(lambda_max_std(&std, targets))
}

/// Log-spaced grid from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lambda_max];
    }
    let lo = ratio.ln();
    (0..count)
        .map(|k| lambda_max * (lo * k as f64 / (count - 1) as f64).exp())
        .collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain { what: "lambda", value: lambda });
    }
    Ok(())
}

/// Lasso at a single penalty.
pub fn fit_lasso_cd(
    features: &DMatrix<f64>,
    targets: &[f64],
    family: Family,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LinearModel> {
    check_lambda(lambda)?;
    let std = validate(features, targets, family)?;
    let mut solver = Solver { z: &std.z, y: targets, family, opts: *opts, sweeps: 0 };
    let mut b0 = initial_intercept(targets, family);
    let mut b = vec![0.0; std.kept.len()];
    let kkt = solver.solve(lambda, &mut b0, &mut b)?;
    Ok(LinearModel::from_standardized(b0, &b, &std, family.link(), solver.sweeps, kkt))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub models: Vec<LinearModel>,
}

/// Warm-started fits along a decreasing penalty grid.
pub fn lasso_path(
    features: &DMatrix<f64>,
    targets: &[f64],
    family: Family,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Result<LassoPath> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty penalty grid".into()));
    }
    for &l in lambdas {
        check_lambda(l)?;
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("penalty grid must be strictly decreasing".into()));
    }
    let (path, stop) = path_prefix(features, targets, family, lambdas, opts)?;
    match stop {
        Some(e) => Err(e),
        None => Ok(path),
    }
}

/// Warm-started fits until the first penalty whose solve does not
/// converge; returns the converged prefix and that error.
fn path_prefix(
    features: &DMatrix<f64>,
    targets: &[f64],
    family: Family,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Result<(LassoPath, Option<Error>)> {
    let std = validate(features, targets, family)?;
    let mut b0 = initial_intercept(targets, family);
    let mut b = vec![0.0; std.kept.len()];
    let mut models = Vec::with_capacity(lambdas.len());
    let mut stop = None;
    for &lambda in lambdas {
        let mut solver = Solver { z: &std.z, y: targets, family, opts: *opts, sweeps: 0 };
        match solver.solve(lambda, &mut b0, &mut b) {
            Ok(kkt) => models.push(LinearModel::from_standardized(b0, &b, &std, family.link(), solver.sweeps, kkt)),
            Err(e @ Error::Convergence { .. }) => {
                stop = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((LassoPath { lambdas: lambdas[..models.len()].to_vec(), models }, stop))
}

/// Penalized objective of `model` on the standardized scale.
pub fn lasso_objective(features: &DMatrix<f64>, targets: &[f64], family: Family, lambda: f64, model: &LinearModel) -> Result<f64> {
    let (std, b0, b) = standardized_state(features, targets, family, model)?;
    let solver = Solver { z: &std.z, y: targets, family, opts: LassoOptions::default(), sweeps: 0 };
    let eta = solver.eta(b0, &b);
    Ok(solver.loss(&eta) + lambda * b.iter().map(|v| v.abs()).sum::<f64>())
}

/// Max KKT violation of `model`, recomputed from the data.
pub fn lasso_kkt_residual(features: &DMatrix<f64>, targets: &[f64], family: Family, lambda: f64, model: &LinearModel) -> Result<f64> {
    let (std, b0, b) = standardized_state(features, targets, family, model)?;
    let solver = Solver { z: &std.z, y: targets, family, opts: LassoOptions::default(), sweeps: 0 };
    let eta = solver.eta(b0, &b);
    Ok(solver.kkt(&solver.residual(&eta), &b, lambda))
}

fn standardized_state(
    features: &DMatrix<f64>,
    targets: &[f64],
    family: Family,
    model: &LinearModel,
) -> Result<(Standardization, f64, Vec<f64>)> {
    let std = validate(features, targets, family)?;
    if model.coefficients.len() != features.ncols() {
        return Err(Error::Dimension(format!(
            "model has {} coefficients for {} features",
            model.coefficients.len(),
            features.ncols()
        )));
    }
    let b: Vec<f64> = std.kept.iter().map(|&j| model.coefficients[j] * std.scale[j]).collect();
    let b0 = model.intercept + std.kept.iter().map(|&j| model.coefficients[j] * std.mean[j]).sum::<f64>();
    Ok((std, b0, b))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoCv {
    pub path: LassoPath,
    /// Mean held-out loss per penalty (squared error or log-loss).
    pub cv_loss: Vec<f64>,
    pub best: usize,
}

impl LassoCv {
    pub fn model(&self) -> &LinearModel {
        &self.path.models[self.best]
    }

    pub fn lambda(&self) -> f64 {
        self.path.lambdas[self.best]
    }
}

fn heldout_loss(family: Family, model: &LinearModel, features: &DMatrix<f64>, targets: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..features.nrows() {
        let row: Vec<f64> = features.row(i).iter().copied().collect();
        let eta = model.linear_predictor(&row);
        total += match family {
            Family::Linear => (targets[i] - eta).powi(2),
            Family::Logistic => log1p_exp(eta) - targets[i] * eta,
        };
    }
    total
}

/// K-fold cross-validated lasso over `n_lambda` log-spaced penalties from
/// `λ_max` down to `ratio · λ_max`; selects the minimum mean held-out loss.
/// The grid stops before the first penalty at which the full-data fit or
/// any fold fit fails to converge.
pub fn lasso_cv(
    features: &DMatrix<f64>,
    targets: &[f64],
    family: Family,
    n_lambda: usize,
    ratio: f64,
    n_folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<LassoCv> {
    let lmax = lambda_max(features, targets, family)?;
    let n = targets.len();
    if n_folds < 2 || n_folds > n {
        return Err(Error::Config(format!("cannot run {n_folds}-fold cross-validation on {n} rows")));
    }
    if n_lambda == 0 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config("penalty grid needs at least one point and a ratio in (0, 1)".into()));
    }
    if lmax <= 0.0 {
        // Targets are uncorrelated with every column: the null model is optimal.
        let model = fit_lasso_cd(features, targets, family, 1.0, opts)?;
        return Ok(LassoCv {
            path: LassoPath { lambdas: vec![1.0], models: vec![model] },
            cv_loss: vec![0.0],
            best: 0,
        });
    }
    let lambdas = lambda_grid(lmax, n_lambda, ratio);
    let (mut path, mut stop) = path_prefix(features, targets, family, &lambdas, opts)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_from_seed(seed));
    let folds: Vec<Vec<usize>> = (0..n_folds).map(|k| order.iter().skip(k).step_by(n_folds).copied().collect()).collect();

    let fold_losses: Vec<Result<(Vec<f64>, Option<Error>)>> = folds
        .par_iter()
        .map(|held| {
            let mut mask = vec![false; n];
            for &i in held {
                mask[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
            let xt = select_rows(features, &train);
            let yt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
            let xh = select_rows(features, held);
            let yh: Vec<f64> = held.iter().map(|&i| targets[i]).collect();
            let (fold_path, fold_stop) = path_prefix(&xt, &yt, family, &lambdas, opts)?;
            Ok((fold_path.models.iter().map(|m| heldout_loss(family, m, &xh, &yh)).collect(), fold_stop))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(n_folds);
    for res in fold_losses {
        let (losses, fold_stop) = res?;
        stop = stop.or(fold_stop);
        per_fold.push(losses);
    }
    let usable = per_fold.iter().map(Vec::len).fold(path.models.len(), usize::min);
    if let Some(e) = stop {
        if usable == 0 {
            return Err(e);
        }
        log::warn!("lasso CV path truncated to {usable} of {} penalties: {e}", lambdas.len());
    }
    path.lambdas.truncate(usable);
    path.models.truncate(usable);

    let mut cv_loss = vec![0.0; usable];
    for losses in &per_fold {
        for (acc, l) in cv_loss.iter_mut().zip(losses) {
            *acc += l;
        }
    }
    cv_loss.iter_mut().for_each(|l| *l /= n as f64);
    let best = cv_loss
        .iter()
        .enumerate()
        .fold(0, |best, (k, &l)| if l < cv_loss[best] { k } else { best });
    Ok(LassoCv { path, cv_loss, best })
}
