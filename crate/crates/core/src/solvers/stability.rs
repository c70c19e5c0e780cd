use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lasso::{lambda_grid, lambda_max, lasso_path, Family, LassoOptions};
use super::select_rows;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Explicit penalty grid; when absent, `n_lambda` log-spaced points from
    /// `λ_max` of the full data down to `min_ratio · λ_max`.
    pub lambda_grid: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub n_subsamples: usize,
    pub subsample_fraction: f64,
    pub threshold: f64,
    pub seed: u64,
    pub lasso: LassoOptions,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            lambda_grid: None,
            n_lambda: 20,
            min_ratio: 0.2,
            n_subsamples: 100,
            subsample_fraction: 0.5,
            threshold: 0.6,
            seed: 0,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySelection {
    pub selected: Vec<usize>,
    /// Per-feature maximum selection frequency over the grid.
    pub frequencies: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Subsamples dropped because they contained a single class.
    pub skipped: usize,
}

/// Lasso-logistic stability selection: features whose maximal selection
/// frequency across the penalty grid reaches `threshold`.
pub fn stability_selection(features: &DMatrix<f64>, labels: &[f64], opts: &StabilityOptions) -> Result<StabilitySelection> {
    if opts.n_subsamples < 20 {
        return Err(Error::Config(format!("need at least 20 subsamples, got {}", opts.n_subsamples)));
    }
    if !(opts.subsample_fraction > 0.0 && opts.subsample_fraction < 1.0) {
        return Err(Error::Config(format!("subsample fraction {} outside (0, 1)", opts.subsample_fraction)));
    }
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {} outside (0, 1]", opts.threshold)));
    }
    let lambdas = match &opts.lambda_grid {
        Some(grid) if grid.is_empty() => return Err(Error::Config("empty penalty grid".into())),
        Some(grid) => grid.clone(),
        None => {
            if opts.n_lambda == 0 {
                return Err(Error::Config("empty penalty grid".into()));
            }
            let lmax = lambda_max(features, labels, Family::Logistic)?;
            lambda_grid(lmax, opts.n_lambda, opts.min_ratio)
        }
    };
    let (n, d) = features.shape();
    let size = ((n as f64 * opts.subsample_fraction).floor() as usize).max(2);

    let outcomes: Vec<Result<Option<Vec<Vec<bool>>>>> = (0..opts.n_subsamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::substream(opts.seed, b as u64);
            let mut rows = index::sample(&mut r, n, size).into_vec();
            rows.sort_unstable();
            let y: Vec<f64> = rows.iter().map(|&i| labels[i]).collect();
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == y.len() {
                return Ok(None);
            }
            let path = lasso_path(&select_rows(features, &rows), &y, Family::Logistic, &lambdas, &opts.lasso)?;
            Ok(Some(
                path.models
                    .iter()
                    .map(|m| m.coefficients.iter().map(|&c| c != 0.0).collect())
                    .collect(),
            ))
        })
        .collect();

    let mut counts = vec![vec![0usize; d]; lambdas.len()];
    let mut used = 0usize;
    let mut skipped = 0usize;
    for outcome in outcomes {
        match outcome? {
            None => skipped += 1,
            Some(masks) => {
                used += 1;
                for (k, mask) in masks.iter().enumerate() {
                    for (j, &on) in mask.iter().enumerate() {
                        counts[k][j] += usize::from(on);
                    }
                }
            }
        }
    }
    if skipped > 0 {
        log::warn!("stability selection skipped {skipped} single-class subsamples");
    }
    if used == 0 {
        return Err(Error::DegenerateLabels);
    }
    let frequencies: Vec<f64> = (0..d)
        .map(|j| counts.iter().map(|c| c[j]).max().unwrap_or(0) as f64 / used as f64)
        .collect();
    let selected = (0..d).filter(|&j| frequencies[j] >= opts.threshold).collect();
    Ok(StabilitySelection { selected, frequencies, lambdas, skipped })
}
