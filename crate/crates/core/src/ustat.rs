//! Two-sample U-statistics with cross-fitting.
//!
//! The pair grid `[m] × [n]` is cut into fold rectangles `C_s × D_t`. Each
//! rectangle is evaluated with nuisances trained on the complement
//! `{i ∉ C_s} ∪ {j ∉ D_t}`, the per-rectangle means are combined with weights
//! `M_s N_t / (mn)`, and the projection variance is estimated from row and
//! column means of the evaluated kernel values.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result, Side};
use crate::normal::{normal_quantile, normal_sf};
use crate::rng;

const X_FOLD_STREAM: u64 = 0x58_464f4c44;
const U_FOLD_STREAM: u64 = 0x55_464f4c44;
const ROW_CHUNK: usize = 64;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for KahanSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    acc.extend(values);
    acc.total()
}

/// A kernel evaluated on one (x-point, u-point) pair.
///
/// Implementations must be deterministic: the same pair always yields the
/// same value. Any auxiliary randomness (tie-break uniforms) travels with the
/// points themselves.
pub trait PairKernel<X, U>: Send + Sync {
    fn eval(&self, x: &X, u: &U) -> Result<f64>;

    /// Row-major values over `xs × us`. Kernels with expensive per-point
    /// work override this to do that work once per point.
    fn eval_block(&self, xs: &[&X], us: &[&U]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(xs.len() * us.len());
        for x in xs {
            for u in us {
                out.push(self.eval(x, u)?);
            }
        }
        Ok(out)
    }
}

/// Adapts an infallible closure into a [`PairKernel`].
pub struct FnKernel<F>(pub F);

impl<X, U, F> PairKernel<X, U> for FnKernel<F>
where
    F: Fn(&X, &U) -> f64 + Send + Sync,
{
    fn eval(&self, x: &X, u: &U) -> Result<f64> {
        Ok((self.0)(x, u))
    }
}

impl<X, U, K: PairKernel<X, U> + ?Sized> PairKernel<X, U> for Box<K> {
    fn eval(&self, x: &X, u: &U) -> Result<f64> {
        (**self).eval(x, u)
    }

    fn eval_block(&self, xs: &[&X], us: &[&U]) -> Result<Vec<f64>> {
        (**self).eval_block(xs, us)
    }
}

fn check_nonempty(m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::EmptySample(Side::X));
    }
    if n == 0 {
        return Err(Error::EmptySample(Side::U));
    }
    Ok(())
}

/// The full-grid U-statistic `(1/(mn)) Σ_i Σ_j k(x_i, u_j)`, accumulated in
/// row-major order.
pub fn u_statistic<X, U, K>(kernel: &K, xs: &[X], us: &[U]) -> Result<f64>
where
    K: PairKernel<X, U> + ?Sized,
{
    check_nonempty(xs.len(), us.len())?;
    let u_refs: Vec<&U> = us.iter().collect();
    let mut acc = KahanSum::new();
    for chunk in xs.chunks(ROW_CHUNK) {
        let x_refs: Vec<&X> = chunk.iter().collect();
        acc.extend(kernel.eval_block(&x_refs, &u_refs)?);
    }
    Ok(acc.total() / (xs.len() as f64 * us.len() as f64))
}

/// Partitions `C_1..C_S` of `{0..m-1}` and `D_1..D_T` of `{0..n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldGrid {
    x_folds: Vec<Vec<usize>>,
    u_folds: Vec<Vec<usize>>,
    m: usize,
    n: usize,
}

fn validate_partition(folds: &[Vec<usize>], size: usize, side: Side) -> Result<()> {
    if folds.is_empty() {
        return Err(Error::InvalidFoldGrid(format!("no {side}-folds")));
    }
    let mut seen = vec![false; size];
    for (k, fold) in folds.iter().enumerate() {
        if fold.is_empty() {
            return Err(Error::InvalidFoldGrid(format!("{side}-fold {k} is empty")));
        }
        for &i in fold {
            if i >= size {
                return Err(Error::InvalidFoldGrid(format!(
                    "{side}-index {i} out of range for {size} points"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidFoldGrid(format!(
                    "{side}-index {i} appears in more than one fold"
                )));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidFoldGrid(format!("{side}-index {i} is in no fold")));
    }
    Ok(())
}

fn balanced_folds(size: usize, folds: usize, side: Side, rng: &mut rng::Rng) -> Result<Vec<Vec<usize>>> {
    if folds == 0 || folds > size {
        return Err(Error::InvalidFoldCount { side, folds, size });
    }
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(rng);
    let base = size / folds;
    let extra = size % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += len;
    }
    Ok(out)
}

impl FoldGrid {
    pub fn new(x_folds: Vec<Vec<usize>>, u_folds: Vec<Vec<usize>>, m: usize, n: usize) -> Result<Self> {
        validate_partition(&x_folds, m, Side::X)?;
        validate_partition(&u_folds, n, Side::U)?;
        Ok(Self { x_folds, u_folds, m, n })
    }

    /// Uniformly random balanced folds (sizes differ by at most one).
    pub fn random(m: usize, n: usize, s: usize, t: usize, seed: u64) -> Result<Self> {
        let x_folds = balanced_folds(m, s, Side::X, &mut rng::substream(seed, X_FOLD_STREAM))?;
        let u_folds = balanced_folds(n, t, Side::U, &mut rng::substream(seed, U_FOLD_STREAM))?;
        Ok(Self { x_folds, u_folds, m, n })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_folds(&self) -> &[Vec<usize>] {
        &self.x_folds
    }

    pub fn u_folds(&self) -> &[Vec<usize>] {
        &self.u_folds
    }

    pub fn x_fold_sizes(&self) -> Vec<usize> {
        self.x_folds.iter().map(Vec::len).collect()
    }

    pub fn u_fold_sizes(&self) -> Vec<usize> {
        self.u_folds.iter().map(Vec::len).collect()
    }

    /// Rectangles `(s, t)` in row-major order.
    pub fn rectangles(&self) -> Vec<(usize, usize)> {
        let t_count = self.u_folds.len();
        (0..self.x_folds.len() * t_count)
            .map(|k| (k / t_count, k % t_count))
            .collect()
    }

    pub fn x_complement(&self, s: usize) -> Vec<usize> {
        complement(&self.x_folds[s], self.m)
    }

    pub fn u_complement(&self, t: usize) -> Vec<usize> {
        complement(&self.u_folds[t], self.n)
    }
}

fn complement(fold: &[usize], size: usize) -> Vec<usize> {
    let mut inside = vec![false; size];
    for &i in fold {
        inside[i] = true;
    }
    (0..size).filter(|&i| !inside[i]).collect()
}

/// `make_fold_grid` under its conventional name.
pub fn make_fold_grid(m: usize, n: usize, s: usize, t: usize, seed: u64) -> Result<FoldGrid> {
    FoldGrid::random(m, n, s, t, seed)
}

/// Per-rectangle estimates `θ̂_st` and the fold sizes defining their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEstimates {
    values: Vec<Vec<f64>>,
    x_sizes: Vec<usize>,
    u_sizes: Vec<usize>,
}

impl FoldEstimates {
    pub fn new(values: Vec<Vec<f64>>, x_sizes: Vec<usize>, u_sizes: Vec<usize>) -> Result<Self> {
        if values.len() != x_sizes.len() || values.iter().any(|row| row.len() != u_sizes.len()) {
            return Err(Error::Dimension(format!(
                "fold estimates must be {}×{}",
                x_sizes.len(),
                u_sizes.len()
            )));
        }
        if x_sizes.is_empty() || u_sizes.is_empty() || x_sizes.contains(&0) || u_sizes.contains(&0) {
            return Err(Error::InvalidFoldGrid("fold sizes must be positive".into()));
        }
        Ok(Self { values, x_sizes, u_sizes })
    }

    /// The S×T matrix of `θ̂_st`.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn x_sizes(&self) -> &[usize] {
        &self.x_sizes
    }

    pub fn u_sizes(&self) -> &[usize] {
        &self.u_sizes
    }

    /// `M_s N_t / (mn)`, with numerator and denominator formed in integers.
    pub fn weight(&self, s: usize, t: usize) -> f64 {
        let m: usize = self.x_sizes.iter().sum();
        let n: usize = self.u_sizes.iter().sum();
        (self.x_sizes[s] * self.u_sizes[t]) as f64 / (m * n) as f64
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        (0..self.x_sizes.len())
            .map(|s| (0..self.u_sizes.len()).map(|t| self.weight(s, t)).collect())
            .collect()
    }
}

impl Serialize for FoldEstimates {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

/// `θ̂ = Σ_{s,t} (M_s N_t / (mn)) θ̂_st`.
pub fn aggregate(folds: &FoldEstimates) -> f64 {
    let mut acc = KahanSum::new();
    for (s, row) in folds.values.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            acc.add(folds.weight(s, t) * v);
        }
    }
    acc.total()
}

/// Kernel values of one fold rectangle, row-major over `x_idx × u_idx`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldBlock {
    pub s: usize,
    pub t: usize,
    pub x_idx: Vec<usize>,
    pub u_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl FoldBlock {
    pub fn mean(&self) -> f64 {
        kahan_sum(self.values.iter().copied()) / self.values.len() as f64
    }
}

/// Result of cross-fitting one kernel: the fold estimates plus every
/// evaluated pair with its fold provenance.
#[derive(Debug, Clone)]
pub struct CrossFit {
    pub estimates: FoldEstimates,
    pub blocks: Vec<FoldBlock>,
}

impl CrossFit {
    pub fn theta_hat(&self) -> f64 {
        aggregate(&self.estimates)
    }
}

/// Coordinates of the fold rectangle a trainer is fitting for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldId {
    pub s: usize,
    pub t: usize,
}

/// Fits nuisances from the out-of-fold points of one rectangle.
pub trait NuisanceTrainer<X, U>: Sync {
    type Bundle: Send;

    fn train(&self, fold: FoldId, xs: &[&X], us: &[&U]) -> Result<Self::Bundle>;
}

impl<X, U, B, F> NuisanceTrainer<X, U> for F
where
    B: Send,
    F: Fn(FoldId, &[&X], &[&U]) -> Result<B> + Sync,
{
    type Bundle = B;

    fn train(&self, fold: FoldId, xs: &[&X], us: &[&U]) -> Result<B> {
        self(fold, xs, us)
    }
}

/// Cross-fits a single kernel. See [`cross_fit_many`].
pub fn cross_fit<X, U, T, K, B>(
    xs: &[X],
    us: &[U],
    folds: &FoldGrid,
    trainer: &T,
    kernel_builder: B,
) -> Result<CrossFit>
where
    X: Sync,
    U: Sync,
    T: NuisanceTrainer<X, U>,
    K: PairKernel<X, U>,
    B: Fn(&T::Bundle) -> Result<K> + Sync,
{
    let mut fits = cross_fit_many(xs, us, folds, trainer, |bundle| Ok(vec![kernel_builder(bundle)?]))?;
    Ok(fits.remove(0))
}

/// Cross-fits several kernels that share one trained bundle per rectangle.
///
/// For every `(s, t)` the trainer sees only `{x_i : i ∉ C_s}` and
/// `{u_j : j ∉ D_t}`. Rectangles run in parallel; results are merged in
/// `(s, t)` order so the output does not depend on the thread count.
pub fn cross_fit_many<X, U, T, K, B>(
    xs: &[X],
    us: &[U],
    folds: &FoldGrid,
    trainer: &T,
    kernel_builder: B,
) -> Result<Vec<CrossFit>>
where
    X: Sync,
    U: Sync,
    T: NuisanceTrainer<X, U>,
    K: PairKernel<X, U>,
    B: Fn(&T::Bundle) -> Result<Vec<K>> + Sync,
{
    if xs.len() != folds.m() || us.len() != folds.n() {
        return Err(Error::Dimension(format!(
            "fold grid is {}×{} but samples are {}×{}",
            folds.m(),
            folds.n(),
            xs.len(),
            us.len()
        )));
    }
    if folds.x_folds().len() == 1 && folds.u_folds().len() == 1 {
        return Err(Error::InsufficientData(
            "a 1×1 fold grid leaves no out-of-fold points to train on".into(),
        ));
    }

    let rectangles = folds.rectangles();
    let per_fold: Vec<Result<Vec<FoldBlock>>> = rectangles
        .par_iter()
        .map(|&(s, t)| {
            let train_x: Vec<&X> = folds.x_complement(s).into_iter().map(|i| &xs[i]).collect();
            let train_u: Vec<&U> = folds.u_complement(t).into_iter().map(|j| &us[j]).collect();
            let bundle = trainer
                .train(FoldId { s, t }, &train_x, &train_u)
                .map_err(|e| Error::FoldTraining { s, t, source: Box::new(e) })?;
            let kernels = kernel_builder(&bundle)?;
            let x_idx = folds.x_folds()[s].clone();
            let u_idx = folds.u_folds()[t].clone();
            let eval_x: Vec<&X> = x_idx.iter().map(|&i| &xs[i]).collect();
            let eval_u: Vec<&U> = u_idx.iter().map(|&j| &us[j]).collect();
            kernels
                .iter()
                .map(|kernel| {
                    Ok(FoldBlock {
                        s,
                        t,
                        x_idx: x_idx.clone(),
                        u_idx: u_idx.clone(),
                        values: kernel.eval_block(&eval_x, &eval_u)?,
                    })
                })
                .collect()
        })
        .collect();

    let mut by_kernel: Vec<Vec<FoldBlock>> = Vec::new();
    for result in per_fold {
        let blocks = result?;
        if by_kernel.is_empty() {
            by_kernel = vec![Vec::with_capacity(rectangles.len()); blocks.len()];
        }
        for (k, block) in blocks.into_iter().enumerate() {
            by_kernel[k].push(block);
        }
    }

    let x_sizes = folds.x_fold_sizes();
    let u_sizes = folds.u_fold_sizes();
    by_kernel
        .into_iter()
        .map(|blocks| {
            let mut values = vec![vec![0.0; u_sizes.len()]; x_sizes.len()];
            for block in &blocks {
                values[block.s][block.t] = block.mean();
            }
            Ok(CrossFit {
                estimates: FoldEstimates::new(values, x_sizes.clone(), u_sizes.clone())?,
                blocks,
            })
        })
        .collect()
}

/// Projection variance estimate
/// `σ̂² = (1/λ̂)(1/m)Σ_i (ψ̄_i· − c)² + (1/(1−λ̂))(1/n)Σ_j (ψ̄_·j − c)²`
/// with `λ̂ = m/(m+n)`. Row and column means pool every pair across folds,
/// each pair evaluated once by its owning fold.
pub fn variance_estimate(blocks: &[FoldBlock], m: usize, n: usize, center: f64) -> Result<f64> {
    check_nonempty(m, n)?;
    let mut hits = vec![0u8; m * n];
    let mut rows = vec![KahanSum::new(); m];
    let mut cols = vec![KahanSum::new(); n];
    for block in blocks {
        if block.values.len() != block.x_idx.len() * block.u_idx.len() {
            return Err(Error::Dimension(format!(
                "fold ({}, {}) holds {} values for a {}×{} rectangle",
                block.s,
                block.t,
                block.values.len(),
                block.x_idx.len(),
                block.u_idx.len()
            )));
        }
        for (a, &i) in block.x_idx.iter().enumerate() {
            if i >= m {
                return Err(Error::Dimension(format!("x-index {i} out of range for {m} points")));
            }
            let row = &block.values[a * block.u_idx.len()..(a + 1) * block.u_idx.len()];
            for (&j, &v) in block.u_idx.iter().zip(row) {
                if j >= n {
                    return Err(Error::Dimension(format!("u-index {j} out of range for {n} points")));
                }
                let hit = &mut hits[i * n + j];
                *hit = hit.saturating_add(1);
                rows[i].add(v);
                cols[j].add(v);
            }
        }
    }
    let missing = hits.iter().filter(|&&h| h == 0).count();
    let duplicated = hits.iter().filter(|&&h| h > 1).count();
    if missing > 0 || duplicated > 0 {
        return Err(Error::Coverage { missing, duplicated });
    }

    let lambda = m as f64 / (m + n) as f64;
    let row_term = kahan_sum(rows.iter().map(|r| (r.total() / n as f64 - center).powi(2))) / m as f64;
    let col_term = kahan_sum(cols.iter().map(|c| (c.total() / m as f64 - center).powi(2))) / n as f64;
    Ok(row_term / lambda + col_term / (1.0 - lambda))
}

/// Outcome of the one-sided test of `θ = 1/2` against `θ < 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub theta_hat: f64,
    pub sigma2_hat: f64,
    #[serde(rename = "lambda")]
    pub lambda_hat: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha_level: f64,
    pub m: usize,
    pub n: usize,
    pub fold_estimates: Option<FoldEstimates>,
    pub seed: Option<u64>,
}

impl TestReport {
    /// Standard error of `θ̂`, `σ̂ / √(m+n)`.
    pub fn standard_error(&self) -> f64 {
        (self.sigma2_hat / (self.m + self.n) as f64).sqrt()
    }

    pub fn with_folds(mut self, folds: FoldEstimates) -> Self {
        self.fold_estimates = Some(folds);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// `T̂ = (1/2 − θ̂)·√(m+n)/σ̂`, `p = 1 − Φ(T̂)`, reject iff `T̂ > Φ⁻¹(1 − α)`.
pub fn z_test(theta_hat: f64, sigma2_hat: f64, m: usize, n: usize, alpha_level: f64) -> Result<TestReport> {
    check_nonempty(m, n)?;
    if !(sigma2_hat > 0.0) || !sigma2_hat.is_finite() {
        return Err(Error::DegenerateVariance(sigma2_hat));
    }
    if !theta_hat.is_finite() {
        return Err(Error::Domain {
            what: "theta_hat",
            value: theta_hat,
        });
    }
    let critical = normal_quantile(1.0 - alpha_level).map_err(|_| Error::Domain {
        what: "alpha_level",
        value: alpha_level,
    })?;
    let t_stat = (0.5 - theta_hat) * ((m + n) as f64).sqrt() / sigma2_hat.sqrt();
    Ok(TestReport {
        theta_hat,
        sigma2_hat,
        lambda_hat: m as f64 / (m + n) as f64,
        t_stat,
        p_value: normal_sf(t_stat),
        reject: t_stat > critical,
        alpha_level,
        m,
        n,
        fold_estimates: None,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::normal_cdf;
    use rand::Rng;
    use std::sync::Mutex;

    fn product() -> FnKernel<impl Fn(&f64, &f64) -> f64> {
        FnKernel(|x: &f64, u: &f64| x * u)
    }

    #[test]
    fn constant_kernel() {
        let k = FnKernel(|_: &f64, _: &f64| 0.5);
        assert_eq!(u_statistic(&k, &[1.0, 2.0, 3.0], &[4.0]).unwrap(), 0.5);
    }

    #[test]
    fn two_by_two_grid() {
        assert_eq!(u_statistic(&product(), &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 5.25);
    }

    #[test]
    fn empty_sides_are_named() {
        assert!(matches!(
            u_statistic(&product(), &[], &[1.0]),
            Err(Error::EmptySample(Side::X))
        ));
        assert!(matches!(
            u_statistic(&product(), &[1.0], &[]),
            Err(Error::EmptySample(Side::U))
        ));
    }

    #[test]
    fn fold_grid_covers_every_pair_once() {
        let grid = make_fold_grid(4, 4, 2, 2, 1).unwrap();
        let mut seen = [[0; 4]; 4];
        for (s, t) in grid.rectangles() {
            for &i in &grid.x_folds()[s] {
                for &j in &grid.u_folds()[t] {
                    seen[i][j] += 1;
                }
            }
        }
        assert!(seen.iter().flatten().all(|&c| c == 1));
        assert_eq!(grid.rectangles().len(), 4);
    }

    #[test]
    fn degenerate_and_balanced_grids() {
        let grid = make_fold_grid(5, 3, 1, 1, 9).unwrap();
        assert_eq!(grid.x_folds(), &[vec![0, 1, 2, 3, 4]]);
        assert_eq!(grid.u_folds(), &[vec![0, 1, 2]]);

        let grid = make_fold_grid(10, 4, 3, 2, 3).unwrap();
        let mut sizes = grid.x_fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn fold_grid_is_seeded() {
        assert_eq!(make_fold_grid(50, 40, 3, 4, 11).unwrap(), make_fold_grid(50, 40, 3, 4, 11).unwrap());
        assert_ne!(make_fold_grid(50, 40, 3, 4, 11).unwrap(), make_fold_grid(50, 40, 3, 4, 12).unwrap());
    }

    #[test]
    fn invalid_fold_counts() {
        assert!(matches!(make_fold_grid(3, 5, 4, 2, 0), Err(Error::InvalidFoldCount { side: Side::X, .. })));
        assert!(matches!(make_fold_grid(3, 5, 2, 6, 0), Err(Error::InvalidFoldCount { side: Side::U, .. })));
        assert!(matches!(make_fold_grid(3, 5, 0, 1, 0), Err(Error::InvalidFoldCount { .. })));
    }

    #[test]
    fn explicit_grid_validation() {
        assert!(FoldGrid::new(vec![vec![0, 1], vec![2]], vec![vec![0]], 3, 1).is_ok());
        assert!(FoldGrid::new(vec![vec![0, 1], vec![1, 2]], vec![vec![0]], 3, 1).is_err());
        assert!(FoldGrid::new(vec![vec![0], vec![2]], vec![vec![0]], 3, 1).is_err());
        assert!(FoldGrid::new(vec![vec![0, 1, 2], vec![]], vec![vec![0]], 3, 1).is_err());
    }

    #[test]
    fn aggregate_equal_folds_is_mean() {
        let est = FoldEstimates::new(vec![vec![0.4, 0.6], vec![0.5, 0.5]], vec![2, 2], vec![3, 3]).unwrap();
        assert!((aggregate(&est) - 0.5).abs() < 1e-15);
        let single = FoldEstimates::new(vec![vec![0.37]], vec![5], vec![2]).unwrap();
        assert_eq!(aggregate(&single), 0.37);
    }

    #[test]
    fn aggregate_unequal_folds() {
        // m = 3 split {2, 1}, n = 2 split {1, 1}.
        let values = vec![vec![0.1, 0.7], vec![0.4, 0.9]];
        let est = FoldEstimates::new(values, vec![2, 1], vec![1, 1]).unwrap();
        let oracle = (2.0 * 0.1 + 2.0 * 0.7 + 0.4 + 0.9) / 6.0;
        assert!((aggregate(&est) - oracle).abs() < 1e-15);
        let total: f64 = est.weights().iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_kernel_cross_fit() {
        let xs: Vec<f64> = (0..9).map(f64::from).collect();
        let us: Vec<f64> = (0..7).map(f64::from).collect();
        let grid = make_fold_grid(9, 7, 2, 3, 5).unwrap();
        let trainer = |_: FoldId, _: &[&f64], _: &[&f64]| Ok(());
        let fit = cross_fit(&xs, &us, &grid, &trainer, |_: &()| Ok(FnKernel(|_: &f64, _: &f64| 0.5))).unwrap();
        assert!(fit.estimates.values().iter().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn one_by_one_grid_is_rejected() {
        let xs = [1.0, 2.0, 3.0];
        let us = [1.0, 2.0];
        let grid = make_fold_grid(3, 2, 1, 1, 0).unwrap();
        let trainer = |_: FoldId, _: &[&f64], _: &[&f64]| Ok(());
        for _seed in [1u64, 2] {
            let err = cross_fit(&xs, &us, &grid, &trainer, |_: &()| Ok(product())).unwrap_err();
            assert!(matches!(err, Error::InsufficientData(_)));
        }
    }

    #[test]
    fn trainer_failure_carries_fold() {
        let xs: Vec<f64> = (0..6).map(f64::from).collect();
        let grid = make_fold_grid(6, 6, 2, 2, 0).unwrap();
        let trainer = |fold: FoldId, _: &[&f64], _: &[&f64]| {
            if fold == (FoldId { s: 1, t: 0 }) {
                Err(Error::DegenerateLabels)
            } else {
                Ok(())
            }
        };
        let err = cross_fit(&xs, &xs, &grid, &trainer, |_: &()| Ok(product())).unwrap_err();
        assert!(matches!(err, Error::FoldTraining { s: 1, t: 0, .. }));
    }

    #[test]
    fn trainer_never_sees_its_own_rectangle() {
        let xs: Vec<(usize, f64)> = (0..11).map(|i| (i, i as f64)).collect();
        let us: Vec<(usize, f64)> = (0..8).map(|j| (j, j as f64)).collect();
        let grid = make_fold_grid(11, 8, 3, 2, 4).unwrap();
        let seen = Mutex::new(Vec::new());
        let trainer = |fold: FoldId, tx: &[&(usize, f64)], tu: &[&(usize, f64)]| {
            let xi: Vec<usize> = tx.iter().map(|p| p.0).collect();
            let uj: Vec<usize> = tu.iter().map(|p| p.0).collect();
            seen.lock().unwrap().push((fold, xi, uj));
            Ok(())
        };
        let kernel = |_: &()| Ok(FnKernel(|x: &(usize, f64), u: &(usize, f64)| x.1 - u.1));
        cross_fit(&xs, &us, &grid, &trainer, kernel).unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), 6);
        for (fold, xi, uj) in seen {
            assert!(xi.iter().all(|i| !grid.x_folds()[fold.s].contains(i)));
            assert!(uj.iter().all(|j| !grid.u_folds()[fold.t].contains(j)));
            assert_eq!(xi.len() + grid.x_folds()[fold.s].len(), 11);
            assert_eq!(uj.len() + grid.u_folds()[fold.t].len(), 8);
        }
    }

    #[test]
    fn variance_of_constant_kernel_is_zero() {
        let xs = vec![0.0; 5];
        let us = vec![0.0; 4];
        let grid = make_fold_grid(5, 4, 2, 2, 1).unwrap();
        let trainer = |_: FoldId, _: &[&f64], _: &[&f64]| Ok(());
        let fit = cross_fit(&xs, &us, &grid, &trainer, |_: &()| Ok(FnKernel(|_: &f64, _: &f64| 0.5))).unwrap();
        assert_eq!(variance_estimate(&fit.blocks, 5, 4, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn variance_reports_coverage_gaps() {
        let block = FoldBlock {
            s: 0,
            t: 0,
            x_idx: vec![0, 1],
            u_idx: vec![0],
            values: vec![1.0, 0.0],
        };
        match variance_estimate(&[block.clone()], 2, 2, 0.5) {
            Err(Error::Coverage { missing, duplicated }) => {
                assert_eq!((missing, duplicated), (2, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
        let full = FoldBlock {
            u_idx: vec![0, 1],
            values: vec![1.0, 0.0, 0.0, 1.0],
            ..block.clone()
        };
        assert!(matches!(
            variance_estimate(&[full, block], 2, 2, 0.5),
            Err(Error::Coverage { missing: 0, duplicated: 2 })
        ));
    }

    #[test]
    fn z_test_reference_points() {
        let r = z_test(0.5, 0.3, 40, 60, 0.05).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_value, 0.5);
        assert!(!r.reject);
        assert_eq!(r.lambda_hat, 0.4);

        let r = z_test(0.4, 1.0, 50, 50, 0.05).unwrap();
        assert!((r.t_stat - 1.0).abs() < 1e-12);
        assert!((r.p_value - 0.158_655_253_931_457).abs() < 1e-12);
        assert!(!r.reject);
        assert!((r.p_value - (1.0 - normal_cdf(r.t_stat))).abs() < 1e-12);

        let r = z_test(0.52, 0.056f64.powi(2) * 1503.0, 751, 752, 0.05).unwrap();
        assert!(r.t_stat < 0.0 && r.p_value > 0.5 && !r.reject);
    }

    #[test]
    fn z_test_rejects_degenerate_variance() {
        assert!(matches!(z_test(0.4, 0.0, 10, 10, 0.05), Err(Error::DegenerateVariance(_))));
        assert!(matches!(z_test(0.4, -1.0, 10, 10, 0.05), Err(Error::DegenerateVariance(_))));
        assert!(z_test(0.4, 1.0, 10, 10, 1.0).is_err());
    }

    #[test]
    fn random_table_matches_naive_loop() {
        let mut rng = rng::rng_from_seed(3);
        let table: Vec<Vec<f64>> = (0..7).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let xs: Vec<usize> = (0..7).collect();
        let us: Vec<usize> = (0..5).collect();
        let k = FnKernel(|i: &usize, j: &usize| table[*i][*j]);
        let mut naive = 0.0;
        for row in &table {
            for v in row {
                naive += v;
            }
        }
        naive /= 35.0;
        assert!((u_statistic(&k, &xs, &us).unwrap() - naive).abs() < 1e-12);
    }
}
