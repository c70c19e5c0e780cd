//! Nuisance fits for the conditional-distribution test: the marginal density
//! ratio γ̂ by probabilistic classification, the score ŝ (a conditional
//! density ratio), and α̂ by regressing the partial rank average `a*` on the
//! covariates.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covshift::{comparison_a, CovariateFn, NuisanceBundle, ScoreFn, TaggedPoint};
use crate::error::{Error, Result};
use crate::rng;
use crate::simlab::SyntheticModel;
use crate::solvers::{
    fit_logistic_irls, fit_ols, lasso_cv, matrix_from_rows, select_columns, stability_selection, Family, IrlsOptions,
    LassoOptions, LinearModel, StabilityOptions,
};

/// Probabilities are kept inside `[PROB_FLOOR, 1 − PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-6;

const CV_LAMBDAS: usize = 50;
const CV_RATIO: f64 = 1e-3;
const CV_FOLDS: usize = 5;

/// A fitted `x ↦ P(class 1 | x)`.
pub trait ProbabilityModel: Send + Sync {
    fn probability(&self, x: &[f64]) -> f64;

    /// Covariate columns the model depends on, when it was selected sparsely.
    fn support(&self) -> Option<Vec<usize>> {
        None
    }
}

/// A fitted `x ↦ E[target | x]`.
pub trait RegressionModel: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

pub trait Classifier: Send + Sync {
    fn fit(&self, features: &DMatrix<f64>, labels: &[f64], seed: u64) -> Result<Arc<dyn ProbabilityModel>>;
}

pub trait Regressor: Send + Sync {
    fn fit(&self, features: &DMatrix<f64>, targets: &[f64], seed: u64) -> Result<Arc<dyn RegressionModel>>;
}

impl ProbabilityModel for LinearModel {
    fn probability(&self, x: &[f64]) -> f64 {
        self.predict(x).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    fn support(&self) -> Option<Vec<usize>> {
        Some(LinearModel::support(self))
    }
}

impl RegressionModel for LinearModel {
    fn predict(&self, x: &[f64]) -> f64 {
        LinearModel::predict(self, x)
    }
}

/// A model fitted on a subset of columns.
struct ColumnSubset {
    columns: Vec<usize>,
    model: LinearModel,
}

impl ColumnSubset {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&j| x[j]).collect()
    }
}

impl ProbabilityModel for ColumnSubset {
    fn probability(&self, x: &[f64]) -> f64 {
        self.model.predict(&self.project(x)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    fn support(&self) -> Option<Vec<usize>> {
        Some(self.columns.clone())
    }
}

impl RegressionModel for ColumnSubset {
    fn predict(&self, x: &[f64]) -> f64 {
        self.model.predict(&self.project(x))
    }
}

/// Classifier selection by name.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierKind {
    /// IRLS logistic regression on every column.
    Logistic,
    /// Cross-validated lasso-penalized logistic regression.
    LassoLogistic,
    /// Stability selection followed by logistic regression on the selected columns.
    StabilityLogistic,
    /// The analytic nuisance of a synthetic model.
    Oracle(SyntheticModel),
}

/// Regressor selection by name.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorKind {
    Ols,
    Ridge(f64),
    /// Cross-validated lasso.
    Lasso,
    Oracle(SyntheticModel),
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierKind::Logistic => f.write_str("logistic"),
            ClassifierKind::LassoLogistic => f.write_str("lasso-logistic"),
            ClassifierKind::StabilityLogistic => f.write_str("stability+logistic"),
            ClassifierKind::Oracle(model) => write!(f, "oracle:{model}"),
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ClassifierKind::Logistic),
            "lasso-logistic" => Ok(ClassifierKind::LassoLogistic),
            "stability+logistic" => Ok(ClassifierKind::StabilityLogistic),
            other => match other.strip_prefix("oracle:") {
                Some(model) => Ok(ClassifierKind::Oracle(model.parse()?)),
                None => Err(Error::Config(format!(
                    "unknown classifier `{other}` (expected logistic, lasso-logistic, stability+logistic or oracle:<model>)"
                ))),
            },
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegressorKind::Ols => f.write_str("ols"),
            RegressorKind::Ridge(r) if *r == 1.0 => f.write_str("ridge"),
            RegressorKind::Ridge(r) => write!(f, "ridge:{r}"),
            RegressorKind::Lasso => f.write_str("lasso"),
            RegressorKind::Oracle(model) => write!(f, "oracle:{model}"),
        }
    }
}

impl FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(RegressorKind::Ols),
            "ridge" => Ok(RegressorKind::Ridge(1.0)),
            "lasso" => Ok(RegressorKind::Lasso),
            other => {
                if let Some(model) = other.strip_prefix("oracle:") {
                    return Ok(RegressorKind::Oracle(model.parse()?));
                }
                if let Some(r) = other.strip_prefix("ridge:") {
                    let r: f64 = r.parse().map_err(|_| Error::Config(format!("bad ridge penalty in `{other}`")))?;
                    if !(r >= 0.0) {
                        return Err(Error::Config(format!("ridge penalty must be ≥ 0 in `{other}`")));
                    }
                    return Ok(RegressorKind::Ridge(r));
                }
                Err(Error::Config(format!(
                    "unknown regressor `{other}` (expected ols, ridge, ridge:<penalty>, lasso or oracle:<model>)"
                )))
            }
        }
    }
}

macro_rules! serde_as_string {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_as_string!(ClassifierKind);
serde_as_string!(RegressorKind);

impl Classifier for ClassifierKind {
    fn fit(&self, features: &DMatrix<f64>, labels: &[f64], seed: u64) -> Result<Arc<dyn ProbabilityModel>> {
        match self {
            ClassifierKind::Logistic => Ok(Arc::new(fit_logistic_irls(features, labels, &IrlsOptions::default())?)),
            ClassifierKind::LassoLogistic => {
                let cv = lasso_cv(features, labels, Family::Logistic, CV_LAMBDAS, CV_RATIO, CV_FOLDS, seed, &LassoOptions::default())?;
                Ok(Arc::new(cv.model().clone()))
            }
            ClassifierKind::StabilityLogistic => fit_stability_logistic(features, labels, None, seed),
            ClassifierKind::Oracle(_) => Err(Error::Config(
                "oracle nuisances are analytic and cannot be fitted as classifiers".into(),
            )),
        }
    }
}

/// Stability selection, then IRLS logistic regression on the selected
/// columns plus `forced` when given.
fn fit_stability_logistic(features: &DMatrix<f64>, labels: &[f64], forced: Option<usize>, seed: u64) -> Result<Arc<dyn ProbabilityModel>> {
    let opts = StabilityOptions { seed, ..StabilityOptions::default() };
    let mut columns = stability_selection(features, labels, &opts)?.selected;
    if let Some(j) = forced {
        if !columns.contains(&j) {
            columns.push(j);
            columns.sort_unstable();
        }
    }
    let model = fit_logistic_irls(&select_columns(features, &columns), labels, &IrlsOptions::default())?;
    Ok(Arc::new(ColumnSubset { columns, model }))
}

/// The joint-ratio classifier of ŝ: a selection step never drops the response.
struct JointClassifier<'a> {
    kind: &'a ClassifierKind,
    response: usize,
}

impl Classifier for JointClassifier<'_> {
    fn fit(&self, features: &DMatrix<f64>, labels: &[f64], seed: u64) -> Result<Arc<dyn ProbabilityModel>> {
        match self.kind {
            ClassifierKind::StabilityLogistic => fit_stability_logistic(features, labels, Some(self.response), seed),
            kind => kind.fit(features, labels, seed),
        }
    }
}

impl Regressor for RegressorKind {
    fn fit(&self, features: &DMatrix<f64>, targets: &[f64], seed: u64) -> Result<Arc<dyn RegressionModel>> {
        match self {
            RegressorKind::Ols => Ok(Arc::new(fit_ols(features, targets, 0.0)?)),
            RegressorKind::Ridge(r) => Ok(Arc::new(fit_ols(features, targets, *r)?)),
            RegressorKind::Lasso => {
                let cv = lasso_cv(features, targets, Family::Linear, CV_LAMBDAS, CV_RATIO, CV_FOLDS, seed, &LassoOptions::default())?;
                Ok(Arc::new(cv.model().clone()))
            }
            RegressorKind::Oracle(_) => Err(Error::Config(
                "oracle nuisances are analytic and cannot be fitted as regressors".into(),
            )),
        }
    }
}

/// Solver choice for each nuisance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    /// Classifier behind γ̂.
    pub gamma: ClassifierKind,
    /// Classifier behind the marginal and joint ratios of ŝ.
    pub score: ClassifierKind,
    /// Regressor behind α̂.
    pub alpha: RegressorKind,
    /// Restrict α̂'s features to the covariates selected while fitting ŝ.
    #[serde(default)]
    pub alpha_on_score_support: bool,
}

impl NuisanceConfig {
    /// Logistic γ̂ and ŝ, OLS α̂.
    pub fn lowdim() -> Self {
        Self {
            gamma: ClassifierKind::Logistic,
            score: ClassifierKind::Logistic,
            alpha: RegressorKind::Ols,
            alpha_on_score_support: false,
        }
    }

    /// Lasso-logistic γ̂, stability-selected logistic ŝ, lasso α̂ on the ŝ support.
    pub fn highdim() -> Self {
        Self {
            gamma: ClassifierKind::LassoLogistic,
            score: ClassifierKind::StabilityLogistic,
            alpha: RegressorKind::Lasso,
            alpha_on_score_support: true,
        }
    }

    /// Every nuisance taken from the analytic truth of `model`.
    pub fn oracle(model: SyntheticModel) -> Self {
        Self {
            gamma: ClassifierKind::Oracle(model),
            score: ClassifierKind::Oracle(model),
            alpha: RegressorKind::Oracle(model),
            alpha_on_score_support: false,
        }
    }

    pub fn score_is_oracle(&self) -> bool {
        matches!(self.score, ClassifierKind::Oracle(_))
    }
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self::lowdim()
    }
}

fn stack_two_samples(xs: &DMatrix<f64>, us: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if xs.nrows() == 0 {
        return Err(Error::EmptySample(crate::Side::X));
    }
    if us.nrows() == 0 {
        return Err(Error::EmptySample(crate::Side::U));
    }
    if xs.ncols() != us.ncols() {
        return Err(Error::Dimension(format!(
            "x-sample has {} columns, u-sample has {}",
            xs.ncols(),
            us.ncols()
        )));
    }
    let (m, n, d) = (xs.nrows(), us.nrows(), xs.ncols());
    let stacked = DMatrix::from_fn(m + n, d, |i, j| if i < m { xs[(i, j)] } else { us[(i - m, j)] });
    let labels = (0..m + n).map(|i| if i < m { 0.0 } else { 1.0 }).collect();
    Ok((stacked, labels))
}

/// A fitted density ratio `x ↦ (m/n)·η̂(x)/(1 − η̂(x))`, where η̂ is the
/// probability of the u-class and `m`, `n` the training class sizes.
pub struct RatioModel {
    classifier: Arc<dyn ProbabilityModel>,
    log_prior: f64,
}

impl RatioModel {
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        let eta = self.classifier.probability(x).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        self.log_prior + eta.ln() - (1.0 - eta).ln()
    }

    pub fn ratio(&self, x: &[f64]) -> f64 {
        self.log_ratio(x).exp()
    }

    pub fn support(&self) -> Option<Vec<usize>> {
        self.classifier.support()
    }
}

/// Trains the probabilistic classifier behind a density ratio: x-rows are
/// class 0, u-rows class 1.
pub fn fit_ratio_model(xs: &DMatrix<f64>, us: &DMatrix<f64>, classifier: &dyn Classifier, seed: u64) -> Result<RatioModel> {
    let (features, labels) = stack_two_samples(xs, us)?;
    let fitted = classifier.fit(&features, &labels, seed)?;
    Ok(RatioModel {
        classifier: fitted,
        log_prior: (xs.nrows() as f64 / us.nrows() as f64).ln(),
    })
}

/// γ̂(x) = clip((m/n)·η̂(x)/(1 − η̂(x))), an estimate of g(x)/f(x).
pub fn fit_density_ratio(
    xs: &DMatrix<f64>,
    us: &DMatrix<f64>,
    classifier: &dyn Classifier,
    clip: (f64, f64),
    seed: u64,
) -> Result<CovariateFn> {
    check_clip(clip)?;
    let model = fit_ratio_model(xs, us, classifier, seed)?;
    Ok(Arc::new(move |x: &[f64]| model.ratio(x).clamp(clip.0, clip.1)))
}

fn check_clip(clip: (f64, f64)) -> Result<()> {
    if !(clip.0 > 0.0 && clip.0 <= clip.1 && clip.1.is_finite()) {
        return Err(Error::Config(format!("invalid clip interval [{}, {}]", clip.0, clip.1)));
    }
    Ok(())
}

/// A fitted score with the covariates its classifiers selected.
#[derive(Clone)]
pub struct ScoreFit {
    pub s_hat: ScoreFn,
    /// Covariate indices (response excluded) used by the fitted ratios, when sparse.
    pub support: Option<Vec<usize>>,
}

fn with_response(points: &[&TaggedPoint]) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut row = p.point.x.clone();
            row.push(p.point.y);
            row
        })
        .collect();
    matrix_from_rows(&rows)
}

fn covariates(points: &[&TaggedPoint]) -> Result<DMatrix<f64>> {
    let rows: Vec<&[f64]> = points.iter().map(|p| p.point.x.as_slice()).collect();
    matrix_from_rows(&rows)
}

/// ŝ(x, y) = γ̂(x) / r̂(x, y), where r̂ is the joint density ratio of
/// (covariates, response) fitted by the same classification recipe and γ̂ is
/// `marginal_gamma`. This is the conditional ratio `f(y|x)/g(y|x)`: larger
/// for points more typical of the x-sample, so `θ < 1/2` under a shift.
pub fn fit_score_s(
    xs_with_y: &DMatrix<f64>,
    us_with_v: &DMatrix<f64>,
    classifier: &dyn Classifier,
    marginal_gamma: CovariateFn,
    clip: Option<(f64, f64)>,
    seed: u64,
) -> Result<ScoreFn> {
    if let Some(c) = clip {
        check_clip(c)?;
    }
    let joint = fit_ratio_model(xs_with_y, us_with_v, classifier, seed)?;
    Ok(score_from_parts(marginal_gamma, joint, clip))
}

fn score_from_parts(marginal: CovariateFn, joint: RatioModel, clip: Option<(f64, f64)>) -> ScoreFn {
    Arc::new(move |x: &[f64], y: f64| {
        let mut row = Vec::with_capacity(x.len() + 1);
        row.extend_from_slice(x);
        row.push(y);
        let mut r = joint.ratio(&row);
        if let Some((lo, hi)) = clip {
            r = r.clamp(lo, hi);
        }
        marginal(x) / r
    })
}

/// Fits ŝ from the score split, with the marginal ratio fitted on the same
/// points. The marginal is left unclipped unless `clip` is given.
pub fn fit_score(xs: &[&TaggedPoint], us: &[&TaggedPoint], classifier: &ClassifierKind, clip: Option<(f64, f64)>, seed: u64) -> Result<ScoreFit> {
    if let ClassifierKind::Oracle(model) = classifier {
        return Ok(ScoreFit { s_hat: model.oracle_score(), support: None });
    }
    let marginal = fit_ratio_model(&covariates(xs)?, &covariates(us)?, classifier, rng::derive_seed(seed, 1))
        .map_err(|e| Error::component("score marginal ratio", e))?;
    let d = xs.first().map_or(0, |p| p.point.x.len());
    let joint_classifier = JointClassifier { kind: classifier, response: d };
    let joint = fit_ratio_model(&with_response(xs)?, &with_response(us)?, &joint_classifier, rng::derive_seed(seed, 2))
        .map_err(|e| Error::component("score joint ratio", e))?;
    let support = match (marginal.support(), joint.support()) {
        (Some(a), Some(b)) => {
            let mut all: Vec<usize> = a.into_iter().chain(b.into_iter().filter(|&j| j < d)).collect();
            all.sort_unstable();
            all.dedup();
            Some(all)
        }
        _ => None,
    };
    let marginal_fn: CovariateFn = match clip {
        Some((lo, hi)) => Arc::new(move |x: &[f64]| marginal.ratio(x).clamp(lo, hi)),
        None => Arc::new(move |x: &[f64]| marginal.ratio(x)),
    };
    Ok(ScoreFit { s_hat: score_from_parts(marginal_fn, joint, clip), support })
}

/// Partial rank averages `a*(x_i, y_i) = (1/n) Σ_j a(x_i, y_i, u_j, v_j)`.
pub fn partial_rank_average(xs: &[&TaggedPoint], us: &[&TaggedPoint], s_hat: &ScoreFn) -> Result<Vec<f64>> {
    if us.is_empty() {
        return Err(Error::EmptySample(crate::Side::U));
    }
    let su: Vec<f64> = us.iter().map(|u| s_hat(&u.point.x, u.point.y)).collect();
    xs.iter()
        .map(|x| {
            let sx = s_hat(&x.point.x, x.point.y);
            let mut hits = 0usize;
            for (u, &s) in us.iter().zip(&su) {
                hits += comparison_a(x, u, sx, s)? as usize;
            }
            Ok(hits as f64 / us.len() as f64)
        })
        .collect()
}

/// α̂ from regressing `a*` on the covariates (the response is never a
/// feature), clamped to `[0, 1]`. With `support`, only those columns are used.
pub fn fit_alpha(
    xs: &[&TaggedPoint],
    us: &[&TaggedPoint],
    s_hat: &ScoreFn,
    regressor: &dyn Regressor,
    support: Option<&[usize]>,
    seed: u64,
) -> Result<CovariateFn> {
    if xs.is_empty() {
        return Err(Error::EmptySample(crate::Side::X));
    }
    let targets = partial_rank_average(xs, us, s_hat)?;
    let features = covariates(xs)?;
    match support {
        Some(cols) => {
            if cols.is_empty() {
                let mean = targets.iter().sum::<f64>() / targets.len() as f64;
                return Ok(Arc::new(move |_: &[f64]| mean.clamp(0.0, 1.0)));
            }
            let cols = cols.to_vec();
            let model = regressor.fit(&select_columns(&features, &cols), &targets, seed)?;
            Ok(Arc::new(move |x: &[f64]| {
                let sub: Vec<f64> = cols.iter().map(|&j| x[j]).collect();
                model.predict(&sub).clamp(0.0, 1.0)
            }))
        }
        None => {
            let model = regressor.fit(&features, &targets, seed)?;
            Ok(Arc::new(move |x: &[f64]| model.predict(x).clamp(0.0, 1.0)))
        }
    }
}

/// Fits γ̂ (and α̂ when `with_alpha`) on one out-of-fold training set;
/// the pre-fitted score is passed through unchanged.
pub fn train_bundle(
    train_xs: &[&TaggedPoint],
    train_us: &[&TaggedPoint],
    score: &ScoreFit,
    config: &NuisanceConfig,
    gamma_clip: (f64, f64),
    with_alpha: bool,
    seed: u64,
) -> Result<NuisanceBundle> {
    let gamma_hat: CovariateFn = match &config.gamma {
        ClassifierKind::Oracle(model) => {
            let model = *model;
            Arc::new(move |x: &[f64]| model.gamma(x).clamp(gamma_clip.0, gamma_clip.1))
        }
        kind => fit_density_ratio(&covariates(train_xs)?, &covariates(train_us)?, kind, gamma_clip, rng::derive_seed(seed, 1))
            .map_err(|e| Error::component("gamma", e))?,
    };
    let alpha_hat: CovariateFn = if !with_alpha {
        Arc::new(|_: &[f64]| 0.0)
    } else {
        match &config.alpha {
            RegressorKind::Oracle(model) => model.oracle_alpha(),
            kind => {
                let support = if config.alpha_on_score_support { score.support.as_deref() } else { None };
                fit_alpha(train_xs, train_us, &score.s_hat, kind, support, rng::derive_seed(seed, 2))
                    .map_err(|e| Error::component("alpha", e))?
            }
        }
    };
    Ok(NuisanceBundle {
        gamma_hat,
        alpha_hat,
        s_hat: score.s_hat.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covshift::{LabeledPoint, TaggedPoint};
    use crate::simlab::gen_lowdim;
    use rand::Rng;

    struct Constant(f64);

    impl ProbabilityModel for Constant {
        fn probability(&self, _: &[f64]) -> f64 {
            self.0
        }
    }

    struct ConstantClassifier(f64);

    impl Classifier for ConstantClassifier {
        fn fit(&self, _: &DMatrix<f64>, _: &[f64], _: u64) -> Result<Arc<dyn ProbabilityModel>> {
            Ok(Arc::new(Constant(self.0)))
        }
    }

    fn tagged(points: Vec<LabeledPoint>, seed: u64) -> Vec<TaggedPoint> {
        let mut r = rng::rng_from_seed(seed);
        points
            .into_iter()
            .enumerate()
            .map(|(index, point)| TaggedPoint { point, zeta: r.random(), index })
            .collect()
    }

    #[test]
    fn odds_arithmetic() {
        let xs = DMatrix::zeros(4, 1);
        let us = DMatrix::zeros(4, 1);
        let g = fit_density_ratio(&xs, &us, &ConstantClassifier(0.5), (0.02, 50.0), 0).unwrap();
        assert!((g(&[0.0]) - 1.0).abs() < 1e-15);
        let g = fit_density_ratio(&xs, &us, &ConstantClassifier(2.0 / 3.0), (0.02, 50.0), 0).unwrap();
        assert!((g(&[0.0]) - 2.0).abs() < 1e-12);
        let us6 = DMatrix::zeros(8, 1);
        let g = fit_density_ratio(&xs, &us6, &ConstantClassifier(2.0 / 3.0), (0.02, 50.0), 0).unwrap();
        assert!((g(&[0.0]) - 1.0).abs() < 1e-12);
        let g = fit_density_ratio(&xs, &us, &ConstantClassifier(1.0 - 1e-9), (0.02, 50.0), 0).unwrap();
        assert_eq!(g(&[0.0]), 50.0);
    }

    #[test]
    fn kind_names_round_trip() {
        for name in ["logistic", "lasso-logistic", "stability+logistic", "oracle:lowdim", "oracle:highdim-alt:100"] {
            assert_eq!(name.parse::<ClassifierKind>().unwrap().to_string(), name);
        }
        for name in ["ols", "ridge", "ridge:0.5", "lasso", "oracle:lowdim-alt"] {
            assert_eq!(name.parse::<RegressorKind>().unwrap().to_string(), name);
        }
        assert!("forest".parse::<ClassifierKind>().is_err());
        let json = serde_json::to_string(&NuisanceConfig::highdim()).unwrap();
        assert_eq!(serde_json::from_str::<NuisanceConfig>(&json).unwrap(), NuisanceConfig::highdim());
    }

    #[test]
    fn swapped_samples_give_reciprocal_ratio() {
        let (xs, us) = gen_lowdim(400, 300, false, 8);
        let mx = matrix_from_rows(&xs.iter().map(|p| p.x.clone()).collect::<Vec<_>>()).unwrap();
        let mu = matrix_from_rows(&us.iter().map(|p| p.x.clone()).collect::<Vec<_>>()).unwrap();
        let clip = (1e-9, 1e9);
        let g = fit_density_ratio(&mx, &mu, &ClassifierKind::Logistic, clip, 0).unwrap();
        let h = fit_density_ratio(&mu, &mx, &ClassifierKind::Logistic, clip, 0).unwrap();
        for k in -3..=3 {
            let x = [0.3 * k as f64, -0.2 * k as f64, 0.1, 0.5, -1.0];
            assert!((g(&x) * h(&x) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_targets_give_constant_alpha() {
        let (xs, us) = gen_lowdim(60, 50, false, 3);
        let xs = tagged(xs, 1);
        let us = tagged(us, 2);
        let xr: Vec<&TaggedPoint> = xs.iter().collect();
        let ur: Vec<&TaggedPoint> = us.iter().collect();
        // A score placing every u-point above every x-point makes a ≡ 1.
        let s: ScoreFn = Arc::new(|_: &[f64], y: f64| y);
        let high: Vec<TaggedPoint> = us
            .iter()
            .map(|u| TaggedPoint { point: LabeledPoint { x: u.point.x.clone(), y: 1e9 }, ..u.clone() })
            .collect();
        let hr: Vec<&TaggedPoint> = high.iter().collect();
        let alpha = fit_alpha(&xr, &hr, &s, &RegressorKind::Ols, None, 0).unwrap();
        assert!((alpha(&[0.1, 2.0, -1.0, 0.0, 3.0]) - 1.0).abs() < 1e-9);
        let alpha = fit_alpha(&xr, &ur, &s, &RegressorKind::Ols, Some(&[]), 0).unwrap();
        let a = partial_rank_average(&xr, &ur, &s).unwrap();
        assert!((alpha(&[0.0; 5]) - a.iter().sum::<f64>() / a.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn alpha_never_reads_the_response() {
        let (xs, us) = gen_lowdim(80, 80, false, 4);
        let xs = tagged(xs, 1);
        let us = tagged(us, 2);
        let xr: Vec<&TaggedPoint> = xs.iter().collect();
        let ur: Vec<&TaggedPoint> = us.iter().collect();
        let s: ScoreFn = Arc::new(|x: &[f64], y: f64| y - x.iter().sum::<f64>());
        let alpha = fit_alpha(&xr, &ur, &s, &RegressorKind::Ols, None, 0).unwrap();
        // α̂ is a function of x alone: its signature has no response slot, and
        // perturbing the responses of evaluation points cannot matter.
        let x = xs[0].point.x.clone();
        assert_eq!(alpha(&x), alpha(&x));
        assert!((0.0..=1.0).contains(&alpha(&x)));
    }

    #[test]
    fn oracle_bundle_is_analytic() {
        let model = SyntheticModel::lowdim(true);
        let score = fit_score(&[], &[], &ClassifierKind::Oracle(model), None, 0).unwrap();
        let bundle = train_bundle(&[], &[], &score, &NuisanceConfig::oracle(model), (0.02, 50.0), true, 0).unwrap();
        let x = [0.5, -0.5, 0.2, 0.1, 1.0];
        assert!(((bundle.gamma_hat)(&x) - model.gamma(&x)).abs() < 1e-15);
        assert!(((bundle.alpha_hat)(&x) - 0.361_836_804_915_881_55).abs() < 1e-9);
    }
}
