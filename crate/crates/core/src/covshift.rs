//! The two-sample conditional-distribution test.
//!
//! With `(X, Y) ~ F` and `(U, V) ~ G`, the null says `f(y|x) = g(v|u)`. The
//! parameter `θ = E[γ(X)·a(X,Y,U,V)]` with `γ = g/f` on the covariates and
//! `a = 1(s(X,Y) < s(U,V))` equals 1/2 under the null and falls below 1/2
//! otherwise. The plug-in kernel is `γ̂(x)·a`; the debiased kernel adds the
//! influence correction `α̂(u) − γ̂(x)·α̂(x)` with `α(x) = E[a | X = x]`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Side};
use crate::nuisance::{fit_score, train_bundle, NuisanceConfig, ScoreFit};
use crate::rng;
use crate::simlab::SyntheticModel;
use crate::stats;
use crate::ustat::{cross_fit_many, variance_estimate, z_test, FoldGrid, FoldId, PairKernel, TestReport};

/// A covariate function `x ↦ value`.
pub type CovariateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// A score `(x, y) ↦ value`.
pub type ScoreFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

impl LabeledPoint {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// One uniform per point, drawn once per run from a seeded stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TieBreakTags {
    pub zeta_x: Vec<f64>,
    pub zeta_u: Vec<f64>,
}

impl TieBreakTags {
    pub fn draw(m: usize, n: usize, seed: u64) -> Self {
        let mut rx = rng::substream(seed, 0);
        let mut ru = rng::substream(seed, 1);
        Self {
            zeta_x: (0..m).map(|_| rx.random()).collect(),
            zeta_u: (0..n).map(|_| ru.random()).collect(),
        }
    }
}

/// A point carrying its tie-break uniform and its index within its sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedPoint {
    pub point: LabeledPoint,
    pub zeta: f64,
    pub index: usize,
}

/// Pairs points with their tags; `index` is the position in `points`
/// unless `indices` gives original positions.
pub fn tag_points(points: &[LabeledPoint], zetas: &[f64], indices: Option<&[usize]>) -> Vec<TaggedPoint> {
    points
        .iter()
        .zip(zetas)
        .enumerate()
        .map(|(k, (p, &zeta))| TaggedPoint {
            point: p.clone(),
            zeta,
            index: indices.map_or(k, |idx| idx[k]),
        })
        .collect()
}

/// `1(s_p < s_q) + 1(ζ_p < ζ_q)·1(s_p = s_q)`, ties by exact equality.
pub fn compare_scores(s_p: f64, s_q: f64, zeta_p: f64, zeta_q: f64) -> bool {
    s_p < s_q || (s_p == s_q && zeta_p < zeta_q)
}

/// The comparison `a(p, q)` for an x-point `p` and a u-point `q` whose
/// scores are `s_p`, `s_q`.
pub fn comparison_a(p: &TaggedPoint, q: &TaggedPoint, s_p: f64, s_q: f64) -> Result<bool> {
    if !s_p.is_finite() {
        return Err(Error::NonFiniteScore { side: Side::X, index: p.index, value: s_p });
    }
    if !s_q.is_finite() {
        return Err(Error::NonFiniteScore { side: Side::U, index: q.index, value: s_q });
    }
    Ok(compare_scores(s_p, s_q, p.zeta, q.zeta))
}

/// [`comparison_a`] with the scores computed from `s_hat`.
pub fn comparison_a_with(p: &TaggedPoint, q: &TaggedPoint, s_hat: &ScoreFn) -> Result<bool> {
    comparison_a(p, q, s_hat(&p.point.x, p.point.y), s_hat(&q.point.x, q.point.y))
}

/// Fitted γ̂, α̂ and ŝ; immutable and shareable.
#[derive(Clone)]
pub struct NuisanceBundle {
    pub gamma_hat: CovariateFn,
    pub alpha_hat: CovariateFn,
    pub s_hat: ScoreFn,
}

impl fmt::Debug for NuisanceBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("NuisanceBundle { .. }")
    }
}

struct Precomputed {
    gamma: Vec<f64>,
    alpha: Vec<f64>,
    score: Vec<f64>,
}

fn precompute(bundle: &NuisanceBundle, points: &[&TaggedPoint], side: Side, need_gamma: bool, need_alpha: bool) -> Result<Precomputed> {
    let mut out = Precomputed {
        gamma: Vec::with_capacity(points.len()),
        alpha: Vec::with_capacity(points.len()),
        score: Vec::with_capacity(points.len()),
    };
    for p in points {
        let s = (bundle.s_hat)(&p.point.x, p.point.y);
        if !s.is_finite() {
            return Err(Error::NonFiniteScore { side, index: p.index, value: s });
        }
        out.score.push(s);
        out.gamma.push(if need_gamma { (bundle.gamma_hat)(&p.point.x) } else { 0.0 });
        out.alpha.push(if need_alpha { (bundle.alpha_hat)(&p.point.x) } else { 0.0 });
    }
    Ok(out)
}

/// `φ(x, u) = γ̂(x)·a(x, u)`.
#[derive(Debug, Clone)]
pub struct PluginKernel {
    pub bundle: NuisanceBundle,
}

/// `ψ(x, u) = γ̂(x)·a(x, u) + α̂(u) − γ̂(x)·α̂(x)`.
#[derive(Debug, Clone)]
pub struct DebiasedKernel {
    pub bundle: NuisanceBundle,
}

impl PairKernel<TaggedPoint, TaggedPoint> for PluginKernel {
    fn eval(&self, x: &TaggedPoint, u: &TaggedPoint) -> Result<f64> {
        let a = comparison_a_with(x, u, &self.bundle.s_hat)?;
        Ok((self.bundle.gamma_hat)(&x.point.x) * f64::from(u8::from(a)))
    }

    fn eval_block(&self, xs: &[&TaggedPoint], us: &[&TaggedPoint]) -> Result<Vec<f64>> {
        let px = precompute(&self.bundle, xs, Side::X, true, false)?;
        let pu = precompute(&self.bundle, us, Side::U, false, false)?;
        let mut out = Vec::with_capacity(xs.len() * us.len());
        for (i, x) in xs.iter().enumerate() {
            for (j, u) in us.iter().enumerate() {
                let a = compare_scores(px.score[i], pu.score[j], x.zeta, u.zeta);
                out.push(if a { px.gamma[i] } else { 0.0 });
            }
        }
        Ok(out)
    }
}

impl PairKernel<TaggedPoint, TaggedPoint> for DebiasedKernel {
    fn eval(&self, x: &TaggedPoint, u: &TaggedPoint) -> Result<f64> {
        let a = f64::from(u8::from(comparison_a_with(x, u, &self.bundle.s_hat)?));
        let g = (self.bundle.gamma_hat)(&x.point.x);
        Ok(g * a + (self.bundle.alpha_hat)(&u.point.x) - g * (self.bundle.alpha_hat)(&x.point.x))
    }

    fn eval_block(&self, xs: &[&TaggedPoint], us: &[&TaggedPoint]) -> Result<Vec<f64>> {
        let px = precompute(&self.bundle, xs, Side::X, true, true)?;
        let pu = precompute(&self.bundle, us, Side::U, false, true)?;
        let mut out = Vec::with_capacity(xs.len() * us.len());
        for (i, x) in xs.iter().enumerate() {
            let g = px.gamma[i];
            let ga = g * px.alpha[i];
            for (j, u) in us.iter().enumerate() {
                let a = compare_scores(px.score[i], pu.score[j], x.zeta, u.zeta);
                out.push(if a { g } else { 0.0 } + pu.alpha[j] - ga);
            }
        }
        Ok(out)
    }
}

pub fn plugin_kernel(bundle: NuisanceBundle) -> PluginKernel {
    PluginKernel { bundle }
}

pub fn debiased_kernel(bundle: NuisanceBundle) -> DebiasedKernel {
    DebiasedKernel { bundle }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCheck {
    pub mean: f64,
    pub standard_error: f64,
}

/// Pairwise mean of `α(u) − γ(x)α(x)`, which separates into
/// `mean_j α(u_j) − mean_i γ(x_i)α(x_i)`, with its standard error.
pub fn influence_mean_zero_check(bundle: &NuisanceBundle, xs: &[LabeledPoint], us: &[LabeledPoint]) -> Result<MeanCheck> {
    if xs.is_empty() {
        return Err(Error::EmptySample(Side::X));
    }
    if us.is_empty() {
        return Err(Error::EmptySample(Side::U));
    }
    let gx: Vec<f64> = xs.iter().map(|p| (bundle.gamma_hat)(&p.x) * (bundle.alpha_hat)(&p.x)).collect();
    let au: Vec<f64> = us.iter().map(|p| (bundle.alpha_hat)(&p.x)).collect();
    let var = |v: &[f64]| if v.len() > 1 { stats::std_dev(v).powi(2) } else { 0.0 };
    Ok(MeanCheck {
        mean: stats::mean(&au) - stats::mean(&gx),
        standard_error: (var(&gx) / xs.len() as f64 + var(&au) / us.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Debiased,
    Plugin,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Debiased => "debiased",
            Method::Plugin => "plugin",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "debiased" => Ok(Method::Debiased),
            "plugin" => Ok(Method::Plugin),
            other => Err(Error::Config(format!("unknown method `{other}` (expected debiased or plugin)"))),
        }
    }
}

/// Where the variance estimate centers the projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceCenter {
    /// The null value 1/2.
    Null,
    /// The estimate θ̂.
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub seed: u64,
    pub x_folds: usize,
    pub u_folds: usize,
    /// Fraction of each sample reserved for fitting ŝ.
    pub score_fraction: f64,
    pub gamma_clip: (f64, f64),
    /// Optional clip on the joint and marginal ratios inside ŝ.
    pub score_clip: Option<(f64, f64)>,
    pub alpha_level: f64,
    pub method: Method,
    pub variance_center: VarianceCenter,
    pub nuisance: NuisanceConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            x_folds: 2,
            u_folds: 2,
            score_fraction: 2.0 / 3.0,
            gamma_clip: (1.0 / 50.0, 50.0),
            score_clip: None,
            alpha_level: 0.05,
            method: Method::Debiased,
            variance_center: VarianceCenter::Null,
            nuisance: NuisanceConfig::default(),
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x_folds < 2 || self.u_folds < 2 {
            return Err(Error::Config(format!(
                "need at least 2 folds per sample, got {}×{}",
                self.x_folds, self.u_folds
            )));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::Config(format!("alpha level {} outside (0, 1)", self.alpha_level)));
        }
        if !(self.score_fraction >= 0.0 && self.score_fraction < 1.0) {
            return Err(Error::Config(format!("score fraction {} outside [0, 1)", self.score_fraction)));
        }
        if self.score_fraction == 0.0 && !self.nuisance.score_is_oracle() {
            return Err(Error::Config("a fitted score needs a positive score fraction".into()));
        }
        let (lo, hi) = self.gamma_clip;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid gamma clip [{lo}, {hi}]")));
        }
        if let Some((lo, hi)) = self.score_clip {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("invalid score clip [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn min_fit_size(&self) -> usize {
        (2 * self.x_folds).max(2 * self.u_folds).max(20)
    }
}

const STREAM_SPLIT_X: u64 = 1;
const STREAM_SPLIT_U: u64 = 2;
const STREAM_TAGS: u64 = 3;
const STREAM_FOLDS: u64 = 4;
const STREAM_SCORE: u64 = 5;
const STREAM_TRAIN: u64 = 6;

/// Every random choice of one test run.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPlan {
    /// Original indices reserved for ŝ.
    pub score_x: Vec<usize>,
    pub score_u: Vec<usize>,
    /// Original indices used for cross-fitting, in cross-fit order.
    pub fit_x: Vec<usize>,
    pub fit_u: Vec<usize>,
    /// Folds over positions in `fit_x` and `fit_u`.
    pub folds: FoldGrid,
    /// Tie-break uniforms for the cross-fit points, aligned with `fit_x` and `fit_u`.
    pub tags: TieBreakTags,
}

fn split_indices(total: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng::rng_from_seed(seed));
    let k = (fraction * total as f64).round() as usize;
    let mut score = order[..k].to_vec();
    let mut fit = order[k..].to_vec();
    score.sort_unstable();
    fit.sort_unstable();
    (score, fit)
}

impl TestPlan {
    pub fn draw(m_total: usize, n_total: usize, config: &TestConfig) -> Result<Self> {
        config.validate()?;
        if m_total == 0 {
            return Err(Error::EmptySample(Side::X));
        }
        if n_total == 0 {
            return Err(Error::EmptySample(Side::U));
        }
        let seed = config.seed;
        let (score_x, fit_x) = split_indices(m_total, config.score_fraction, rng::derive_seed(seed, STREAM_SPLIT_X));
        let (score_u, fit_u) = split_indices(n_total, config.score_fraction, rng::derive_seed(seed, STREAM_SPLIT_U));
        let need = config.min_fit_size();
        if fit_x.len() < need || fit_u.len() < need {
            return Err(Error::InsufficientData(format!(
                "cross-fit sets have {} and {} points, need at least {need} each",
                fit_x.len(),
                fit_u.len()
            )));
        }
        if !config.nuisance.score_is_oracle() && (score_x.len() < 20 || score_u.len() < 20) {
            return Err(Error::InsufficientData(format!(
                "score sets have {} and {} points, need at least 20 each",
                score_x.len(),
                score_u.len()
            )));
        }
        let folds = FoldGrid::random(
            fit_x.len(),
            fit_u.len(),
            config.x_folds,
            config.u_folds,
            rng::derive_seed(seed, STREAM_FOLDS),
        )?;
        let tags = TieBreakTags::draw(fit_x.len(), fit_u.len(), rng::derive_seed(seed, STREAM_TAGS));
        Ok(Self { score_x, score_u, fit_x, fit_u, folds, tags })
    }
}

enum CovShiftKernel {
    Plugin(PluginKernel),
    Debiased(DebiasedKernel),
}

impl PairKernel<TaggedPoint, TaggedPoint> for CovShiftKernel {
    fn eval(&self, x: &TaggedPoint, u: &TaggedPoint) -> Result<f64> {
        match self {
            CovShiftKernel::Plugin(k) => k.eval(x, u),
            CovShiftKernel::Debiased(k) => k.eval(x, u),
        }
    }

    fn eval_block(&self, xs: &[&TaggedPoint], us: &[&TaggedPoint]) -> Result<Vec<f64>> {
        match self {
            CovShiftKernel::Plugin(k) => k.eval_block(xs, us),
            CovShiftKernel::Debiased(k) => k.eval_block(xs, us),
        }
    }
}

/// Runs the test with `config.method`.
pub fn run_test(xs: &[LabeledPoint], us: &[LabeledPoint], config: &TestConfig) -> Result<TestReport> {
    Ok(run_tests(xs, us, config, &[config.method])?.remove(0))
}

/// Runs several kernels on the same split, folds, tags and nuisance fits.
pub fn run_tests(xs: &[LabeledPoint], us: &[LabeledPoint], config: &TestConfig, methods: &[Method]) -> Result<Vec<TestReport>> {
    let plan = TestPlan::draw(xs.len(), us.len(), config)?;
    run_with_plan(xs, us, &plan, config, methods)
}

fn check_dimensions(xs: &[LabeledPoint], us: &[LabeledPoint]) -> Result<()> {
    let d = xs.first().map_or(0, |p| p.x.len());
    for (side, sample) in [(Side::X, xs), (Side::U, us)] {
        for (i, p) in sample.iter().enumerate() {
            if p.x.len() != d {
                return Err(Error::Dimension(format!(
                    "{side}-point {i} has {} covariates, expected {d}",
                    p.x.len()
                )));
            }
            if !p.y.is_finite() || p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain { what: "sample value", value: f64::NAN });
            }
        }
    }
    Ok(())
}

/// Steps 1 to 7 of the test for an explicit plan.
pub fn run_with_plan(
    xs: &[LabeledPoint],
    us: &[LabeledPoint],
    plan: &TestPlan,
    config: &TestConfig,
    methods: &[Method],
) -> Result<Vec<TestReport>> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no test method requested".into()));
    }
    check_dimensions(xs, us)?;
    let seed = config.seed;

    let score_x = tag_points(&pick(xs, &plan.score_x), &vec![0.0; plan.score_x.len()], Some(&plan.score_x));
    let score_u = tag_points(&pick(us, &plan.score_u), &vec![0.0; plan.score_u.len()], Some(&plan.score_u));
    let sx: Vec<&TaggedPoint> = score_x.iter().collect();
    let su: Vec<&TaggedPoint> = score_u.iter().collect();
    let score: ScoreFit = fit_score(&sx, &su, &config.nuisance.score, config.score_clip, rng::derive_seed(seed, STREAM_SCORE))
        .map_err(|e| Error::component("score", e))?;

    let fit_xs = tag_points(&pick(xs, &plan.fit_x), &plan.tags.zeta_x, Some(&plan.fit_x));
    let fit_us = tag_points(&pick(us, &plan.fit_u), &plan.tags.zeta_u, Some(&plan.fit_u));
    let with_alpha = methods.contains(&Method::Debiased);

    let trainer = |fold: FoldId, tx: &[&TaggedPoint], tu: &[&TaggedPoint]| {
        train_bundle(
            tx,
            tu,
            &score,
            &config.nuisance,
            config.gamma_clip,
            with_alpha,
            rng::derive_path(seed, &[STREAM_TRAIN, fold.s as u64, fold.t as u64]),
        )
    };
    let builder = |bundle: &NuisanceBundle| {
        Ok(methods
            .iter()
            .map(|m| match m {
                Method::Plugin => CovShiftKernel::Plugin(plugin_kernel(bundle.clone())),
                Method::Debiased => CovShiftKernel::Debiased(debiased_kernel(bundle.clone())),
            })
            .collect())
    };
    let fits = cross_fit_many(&fit_xs, &fit_us, &plan.folds, &trainer, builder)?;

    let (m, n) = (fit_xs.len(), fit_us.len());
    fits.into_iter()
        .map(|fit| {
            let theta = fit.theta_hat();
            let center = match config.variance_center {
                VarianceCenter::Null => 0.5,
                VarianceCenter::Estimate => theta,
            };
            let sigma2 = variance_estimate(&fit.blocks, m, n, center)?;
            Ok(z_test(theta, sigma2, m, n, config.alpha_level)?
                .with_folds(fit.estimates)
                .with_seed(seed))
        })
        .collect()
}

fn pick(points: &[LabeledPoint], idx: &[usize]) -> Vec<LabeledPoint> {
    idx.iter().map(|&i| points[i].clone()).collect()
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
}

impl Estimate {
    fn of(values: &[f64]) -> Self {
        Self { mean: stats::mean(values), standard_error: stats::std_error(values) }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.standard_error
    }
}

/// Biases of the debiased and plug-in estimators under deterministic
/// nuisance perturbations, measured against the unperturbed estimator on
/// the same draws.
#[derive(Debug, Clone, Serialize)]
pub struct DoubleRobustnessReport {
    pub replications: usize,
    /// Debiased kernel, γ̂ = γ + δγ, α̂ = α.
    pub gamma_only: Estimate,
    /// Debiased kernel, γ̂ = γ, α̂ = α + δα.
    pub alpha_only: Estimate,
    /// Debiased kernel with both perturbed.
    pub both: Estimate,
    /// `b = −E_F[δγ·δα] = E_F[(γ̂ − γ)(α − α̂)]`.
    pub product_mean: Estimate,
    /// Plug-in kernel with γ̂ = γ + δγ.
    pub plugin_gamma_only: Estimate,
    /// `E_F[δγ·α]`, the plug-in's first-order bias.
    pub plugin_expected: Estimate,
}

/// Measures the double-robustness identity on a synthetic model. The score
/// is the response itself, whose α is analytic:
/// `α(x) = Φ((shift − βᵀx)/√(‖β‖² + 2))` because `βᵀU` is independent of
/// `μᵀU` and hence of the ratio cutoff.
pub fn double_robustness_probe(
    model: &SyntheticModel,
    delta_gamma: &(dyn Fn(&[f64]) -> f64 + Sync),
    delta_alpha: &(dyn Fn(&[f64]) -> f64 + Sync),
    m: usize,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<DoubleRobustnessReport> {
    use rayon::prelude::*;
    if m == 0 || n == 0 || replications < 2 {
        return Err(Error::Config("probe needs non-empty samples and at least 2 replications".into()));
    }
    let alpha = model.response_score_alpha();
    let gamma = |x: &[f64]| model.gamma(x);

    let rows: Vec<[f64; 4]> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let (xs, us) = model.sample_truncated(m, n, rng::derive_path(seed, &[0, r as u64]));
            let mut vs: Vec<f64> = us.iter().map(|p| p.y).collect();
            vs.sort_by(f64::total_cmp);
            // a* against the u-sample: share of v_j above y_i.
            let big_a: Vec<f64> = xs
                .iter()
                .map(|p| (n - vs.partition_point(|&v| v <= p.y)) as f64 / n as f64)
                .collect();
            let estimate = |gp: &dyn Fn(&[f64]) -> f64, ap: &dyn Fn(&[f64]) -> f64, debiased: bool| {
                let mut sx = 0.0;
                for (p, a) in xs.iter().zip(&big_a) {
                    let g = gp(&p.x);
                    sx += g * a;
                    if debiased {
                        sx -= g * ap(&p.x);
                    }
                }
                let mut su = 0.0;
                if debiased {
                    su = us.iter().map(|p| ap(&p.x)).sum::<f64>() / n as f64;
                }
                sx / m as f64 + su
            };
            let g_pert = |x: &[f64]| gamma(x) + delta_gamma(x);
            let a_pert = |x: &[f64]| alpha(x) + delta_alpha(x);
            let base = estimate(&gamma, &*alpha, true);
            let base_plugin = estimate(&gamma, &*alpha, false);
            [
                estimate(&g_pert, &*alpha, true) - base,
                estimate(&gamma, &a_pert, true) - base,
                estimate(&g_pert, &a_pert, true) - base,
                estimate(&g_pert, &*alpha, false) - base_plugin,
            ]
        })
        .collect();

    // Population moments of the perturbations under F, on a fresh large draw.
    let (big_x, _) = model.sample_truncated(200_000, 1, rng::derive_seed(seed, 1));
    let product: Vec<f64> = big_x.iter().map(|p| -delta_gamma(&p.x) * delta_alpha(&p.x)).collect();
    let plugin: Vec<f64> = big_x.iter().map(|p| delta_gamma(&p.x) * alpha(&p.x)).collect();

    let column = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    Ok(DoubleRobustnessReport {
        replications,
        gamma_only: Estimate::of(&column(0)),
        alpha_only: Estimate::of(&column(1)),
        both: Estimate::of(&column(2)),
        product_mean: Estimate::of(&product),
        plugin_gamma_only: Estimate::of(&column(3)),
        plugin_expected: Estimate::of(&plugin),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ustat::u_statistic;

    fn pt(index: usize, y: f64, zeta: f64) -> TaggedPoint {
        TaggedPoint { point: LabeledPoint::new(vec![0.0], y), zeta, index }
    }

    fn constant_bundle(gamma: f64, alpha: f64) -> NuisanceBundle {
        NuisanceBundle {
            gamma_hat: Arc::new(move |_: &[f64]| gamma),
            alpha_hat: Arc::new(move |_: &[f64]| alpha),
            s_hat: Arc::new(|_: &[f64], y: f64| y),
        }
    }

    #[test]
    fn comparison_rules() {
        assert!(comparison_a(&pt(0, 0.0, 0.9), &pt(0, 0.0, 0.1), 1.0, 2.0).unwrap());
        assert!(comparison_a(&pt(0, 0.0, 0.3), &pt(0, 0.0, 0.7), 3.0, 3.0).unwrap());
        assert!(!comparison_a(&pt(0, 0.0, 0.7), &pt(0, 0.0, 0.3), 3.0, 3.0).unwrap());
        match comparison_a(&pt(4, 0.0, 0.1), &pt(7, 0.0, 0.2), 1.0, f64::NAN) {
            Err(Error::NonFiniteScore { side: Side::U, index: 7, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kernel_substitutions() {
        let x = pt(0, 1.0, 0.5);
        let u = pt(0, 2.0, 0.5);
        let mut b = constant_bundle(2.0, 0.0);
        assert_eq!(plugin_kernel(b.clone()).eval(&x, &u).unwrap(), 2.0);
        b.alpha_hat = Arc::new(|x: &[f64]| if x[0] == 1.0 { 0.3 } else { 0.4 });
        let u1 = TaggedPoint { point: LabeledPoint::new(vec![1.0], 2.0), ..u.clone() };
        assert!((debiased_kernel(b).eval(&x, &u1).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn block_evaluation_matches_pairwise() {
        let xs: Vec<TaggedPoint> = (0..6).map(|i| pt(i, (i % 3) as f64, 0.1 * i as f64)).collect();
        let us: Vec<TaggedPoint> = (0..5).map(|j| pt(j, (j % 2) as f64 + 0.5, 0.13 * j as f64)).collect();
        let mut b = constant_bundle(1.7, 0.0);
        b.alpha_hat = Arc::new(|x: &[f64]| 0.2 + 0.1 * x[0]);
        b.gamma_hat = Arc::new(|x: &[f64]| 1.0 + x[0].abs());
        let xr: Vec<&TaggedPoint> = xs.iter().collect();
        let ur: Vec<&TaggedPoint> = us.iter().collect();
        for k in [&debiased_kernel(b.clone()) as &dyn PairKernel<TaggedPoint, TaggedPoint>, &plugin_kernel(b.clone())] {
            let block = k.eval_block(&xr, &ur).unwrap();
            for i in 0..6 {
                for j in 0..5 {
                    assert_eq!(block[i * 5 + j], k.eval(&xs[i], &us[j]).unwrap());
                }
            }
        }
    }

    #[test]
    fn zero_alpha_reduces_to_plugin_and_constant_alpha_cancels() {
        let xs: Vec<TaggedPoint> = (0..4).map(|i| pt(i, i as f64 * 0.7, 0.2)).collect();
        let us: Vec<TaggedPoint> = (0..4).map(|j| pt(j, j as f64 * 0.9 - 0.5, 0.6)).collect();
        let b = constant_bundle(1.3, 0.0);
        let c = constant_bundle(1.0, 0.37);
        for x in &xs {
            for u in &us {
                assert_eq!(debiased_kernel(b.clone()).eval(x, u).unwrap(), plugin_kernel(b.clone()).eval(x, u).unwrap());
                let a = f64::from(u8::from(comparison_a_with(x, u, &c.s_hat).unwrap()));
                assert!((debiased_kernel(c.clone()).eval(x, u).unwrap() - a).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unit_weights_on_exchangeable_data() {
        let mut r = rng::rng_from_seed(3);
        let xs: Vec<TaggedPoint> = (0..300).map(|i| pt(i, rng::std_normal(&mut r), r.random())).collect();
        let us: Vec<TaggedPoint> = (0..300).map(|j| pt(j, rng::std_normal(&mut r), r.random())).collect();
        let theta = u_statistic(&plugin_kernel(constant_bundle(1.0, 0.0)), &xs, &us).unwrap();
        // Var of the Mann–Whitney mean is (m+n+1)/(12mn).
        assert!((theta - 0.5).abs() < 3.0 * (601.0f64 / (12.0 * 90_000.0)).sqrt());
    }

    #[test]
    fn influence_check_cancels_for_constants() {
        let xs = vec![LabeledPoint::new(vec![1.0], 0.0), LabeledPoint::new(vec![-2.0], 1.0)];
        let us = vec![LabeledPoint::new(vec![0.5], 0.0)];
        let c = influence_mean_zero_check(&constant_bundle(1.0, 0.42), &xs, &us).unwrap();
        assert_eq!(c.mean, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::default().validate().is_ok());
        let bad = TestConfig { x_folds: 1, ..TestConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TestConfig { score_fraction: 0.0, ..TestConfig::default() };
        assert!(bad.validate().is_err());
        let ok = TestConfig {
            score_fraction: 0.0,
            nuisance: NuisanceConfig::oracle(SyntheticModel::lowdim(false)),
            ..TestConfig::default()
        };
        assert!(ok.validate().is_ok());
        let json = serde_json::to_string(&TestConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<TestConfig>(&json).unwrap(), TestConfig::default());
    }

    #[test]
    fn tiny_samples_are_insufficient() {
        let xs: Vec<LabeledPoint> = (0..30).map(|i| LabeledPoint::new(vec![i as f64], 0.0)).collect();
        assert!(matches!(run_test(&xs, &xs, &TestConfig::default()), Err(Error::InsufficientData(_))));
    }
}
