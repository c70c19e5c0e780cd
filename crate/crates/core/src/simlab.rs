//! Synthetic Gaussian models with a conditional mean shift, the density-ratio
//! cutoff, and the Monte Carlo runner that tabulates bias, type-1 error and
//! power.
//!
//! Under `F`, `X ~ N(0, I)` and `Y = βᵀX + ε`. Under `G`, `U ~ N(μ, I)` and
//! `V = βᵀU + shift + ε`, with `ε ~ N(0, 1)`. The marginal ratio is
//! `γ(x) = exp(μᵀx − ‖μ‖²/2)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covshift::{run_tests, CovariateFn, LabeledPoint, Method, ScoreFn, TestConfig};
use crate::error::{Error, Result};
use crate::normal::normal_cdf;
use crate::nuisance::NuisanceConfig;
use crate::rng;
use crate::stats;

/// Conditional mean shift of the low-dimensional alternative.
pub const LOWDIM_SHIFT: f64 = 0.5;
/// Conditional mean shift of the high-dimensional alternative.
pub const HIGHDIM_SHIFT: f64 = 0.25;
/// Ratio interval kept by [`apply_ratio_cutoff`].
pub const RATIO_CUTOFF: (f64, f64) = (1.0 / 50.0, 50.0);

const LEADING: [f64; 5] = [1.0, -1.0, 1.0, -1.0, 0.0];

/// One of the Gaussian shift models. `dim` is the covariate dimension and
/// `shift` the conditional mean shift of `V` (zero under the null).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticModel {
    pub dim: usize,
    pub shift: f64,
    highdim: bool,
}

impl SyntheticModel {
    pub fn lowdim(alternative: bool) -> Self {
        Self {
            dim: 5,
            shift: if alternative { LOWDIM_SHIFT } else { 0.0 },
            highdim: false,
        }
    }

    pub fn highdim(dim: usize, alternative: bool) -> Result<Self> {
        if dim < 5 {
            return Err(Error::Config(format!("high-dimensional model needs dim ≥ 5, got {dim}")));
        }
        Ok(Self {
            dim,
            shift: if alternative { HIGHDIM_SHIFT } else { 0.0 },
            highdim: true,
        })
    }

    pub fn is_alternative(&self) -> bool {
        self.shift != 0.0
    }

    /// `μ = (1, −1, 1, −1, 0, 0, …)`.
    pub fn mu(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[..5].copy_from_slice(&LEADING);
        v
    }

    /// `β = (1, 1, 1, 1, 1, 0, …)`.
    pub fn beta(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[..5].fill(1.0);
        v
    }

    /// The true marginal ratio `g(x)/f(x) = exp(μᵀx − 2)`.
    pub fn gamma(&self, x: &[f64]) -> f64 {
        (LEADING.iter().zip(x).map(|(m, v)| m * v).sum::<f64>() - 2.0).exp()
    }

    fn beta_dot(x: &[f64]) -> f64 {
        x.iter().take(5).sum()
    }

    /// `s(x, y) = −(y − βᵀx)`: the conditional density ratio `f(y|x)/g(y|x)`
    /// is increasing in this score.
    pub fn oracle_score(&self) -> ScoreFn {
        Arc::new(|x: &[f64], y: f64| -(y - Self::beta_dot(x)))
    }

    /// α for the oracle score: `P(ε′ + shift < ε) = Φ(−shift/√2)`, constant in x.
    pub fn oracle_alpha(&self) -> CovariateFn {
        let a = normal_cdf(-self.shift / 2f64.sqrt());
        Arc::new(move |_: &[f64]| a)
    }

    /// α for the response itself as score, `a = 1(y < v)`:
    /// `Φ((shift − βᵀx)/√(‖β‖² + 2))`. `βᵀU` is independent of `μᵀU` since
    /// `βᵀμ = 0`, so the cutoff leaves this unchanged.
    pub fn response_score_alpha(&self) -> CovariateFn {
        let shift = self.shift;
        let scale = 7f64.sqrt();
        Arc::new(move |x: &[f64]| normal_cdf((shift - Self::beta_dot(x)) / scale))
    }

    fn draw_point(&self, r: &mut rng::Rng, mean: Option<&[f64]>, shift: f64) -> LabeledPoint {
        let x: Vec<f64> = match mean {
            Some(mu) => mu.iter().map(|m| m + rng::std_normal(r)).collect(),
            None => (0..self.dim).map(|_| rng::std_normal(r)).collect(),
        };
        let y = Self::beta_dot(&x) + shift + rng::std_normal(r);
        LabeledPoint::new(x, y)
    }

    /// Draws `m` points from `F` and `n` from `G` without any cutoff.
    pub fn sample(&self, m: usize, n: usize, seed: u64) -> (Vec<LabeledPoint>, Vec<LabeledPoint>) {
        let mu = self.mu();
        let mut rx = rng::substream(seed, 0);
        let mut ru = rng::substream(seed, 1);
        let xs = (0..m).map(|_| self.draw_point(&mut rx, None, 0.0)).collect();
        let us = (0..n).map(|_| self.draw_point(&mut ru, Some(&mu), self.shift)).collect();
        (xs, us)
    }

    /// Draws from `F` and `G` restricted to `{γ ∈ [1/50, 50]}` until exactly
    /// `m` and `n` points are kept.
    pub fn sample_truncated(&self, m: usize, n: usize, seed: u64) -> (Vec<LabeledPoint>, Vec<LabeledPoint>) {
        let mu = self.mu();
        let keep = |p: &LabeledPoint| within(self.gamma(&p.x), RATIO_CUTOFF);
        let mut rx = rng::substream(seed, 0);
        let mut ru = rng::substream(seed, 1);
        let mut xs = Vec::with_capacity(m);
        while xs.len() < m {
            let p = self.draw_point(&mut rx, None, 0.0);
            if keep(&p) {
                xs.push(p);
            }
        }
        let mut us = Vec::with_capacity(n);
        while us.len() < n {
            let p = self.draw_point(&mut ru, Some(&mu), self.shift);
            if keep(&p) {
                us.push(p);
            }
        }
        (xs, us)
    }
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

impl fmt::Display for SyntheticModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alt = if self.is_alternative() { "-alt" } else { "" };
        if self.highdim {
            write!(f, "highdim{alt}:{}", self.dim)
        } else {
            write!(f, "lowdim{alt}")
        }
    }
}

impl FromStr for SyntheticModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowdim" => return Ok(Self::lowdim(false)),
            "lowdim-alt" => return Ok(Self::lowdim(true)),
            _ => {}
        }
        let parsed = s
            .strip_prefix("highdim-alt:")
            .map(|d| (d, true))
            .or_else(|| s.strip_prefix("highdim:").map(|d| (d, false)));
        match parsed {
            Some((d, alt)) => {
                let dim = d.parse().map_err(|_| Error::Config(format!("bad dimension in model `{s}`")))?;
                Self::highdim(dim, alt)
            }
            None => Err(Error::Config(format!(
                "unknown model `{s}` (expected lowdim, lowdim-alt, highdim:<dim> or highdim-alt:<dim>)"
            ))),
        }
    }
}

/// Low-dimensional draws: `d = 5`, shift 0.5 under the alternative.
pub fn gen_lowdim(n_x: usize, n_u: usize, alternative: bool, seed: u64) -> (Vec<LabeledPoint>, Vec<LabeledPoint>) {
    SyntheticModel::lowdim(alternative).sample(n_x, n_u, seed)
}

/// High-dimensional draws: `μ`, `β` zero-padded to `dim`, shift 0.25 under the alternative.
pub fn gen_highdim(
    n_x: usize,
    n_u: usize,
    alternative: bool,
    dim: usize,
    seed: u64,
) -> Result<(Vec<LabeledPoint>, Vec<LabeledPoint>)> {
    Ok(SyntheticModel::highdim(dim, alternative)?.sample(n_x, n_u, seed))
}

/// Keeps the points whose true ratio lies in the closed `interval`.
pub fn apply_ratio_cutoff(sample: &[LabeledPoint], ratio: impl Fn(&[f64]) -> f64, interval: (f64, f64)) -> Vec<LabeledPoint> {
    sample.iter().filter(|p| within(ratio(&p.x), interval)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Lowdim,
    Highdim,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Lowdim => "lowdim",
            Setting::Highdim => "highdim",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowdim" => Ok(Setting::Lowdim),
            "highdim" => Ok(Setting::Highdim),
            other => Err(Error::Config(format!("unknown setting `{other}` (expected lowdim or highdim)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub setting: Setting,
    /// Points per sample entering cross-fitting; each trial draws `3·n_crossfit`.
    pub n_crossfit: usize,
    pub alternative: bool,
    pub trials: usize,
    pub seed: u64,
    /// Nuisance solvers; the setting's default when absent.
    pub nuisance: Option<NuisanceConfig>,
    pub x_folds: usize,
    pub u_folds: usize,
    pub score_fraction: f64,
    pub gamma_clip: (f64, f64),
    /// High-dimensional dimension; 500 when absent.
    pub dim_override: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let t = TestConfig::default();
        Self {
            setting: Setting::Lowdim,
            n_crossfit: 500,
            alternative: false,
            trials: 500,
            seed: 0,
            nuisance: None,
            x_folds: t.x_folds,
            u_folds: t.u_folds,
            score_fraction: t.score_fraction,
            gamma_clip: t.gamma_clip,
            dim_override: None,
        }
    }
}

impl SimConfig {
    pub fn model(&self) -> Result<SyntheticModel> {
        match self.setting {
            Setting::Lowdim => {
                if self.dim_override.is_some_and(|d| d != 5) {
                    return Err(Error::Config("the low-dimensional setting has dimension 5".into()));
                }
                Ok(SyntheticModel::lowdim(self.alternative))
            }
            Setting::Highdim => SyntheticModel::highdim(self.dim_override.unwrap_or(500), self.alternative),
        }
    }

    pub fn nuisance_config(&self) -> NuisanceConfig {
        self.nuisance.clone().unwrap_or_else(|| match self.setting {
            Setting::Lowdim => NuisanceConfig::lowdim(),
            Setting::Highdim => NuisanceConfig::highdim(),
        })
    }

    /// Points drawn per sample and trial.
    pub fn points_per_sample(&self) -> usize {
        (self.n_crossfit as f64 / (1.0 - self.score_fraction)).round() as usize
    }

    pub fn test_config(&self, seed: u64) -> TestConfig {
        TestConfig {
            seed,
            x_folds: self.x_folds,
            u_folds: self.u_folds,
            score_fraction: self.score_fraction,
            gamma_clip: self.gamma_clip,
            nuisance: self.nuisance_config(),
            ..TestConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be ≥ 1".into()));
        }
        if self.n_crossfit == 0 {
            return Err(Error::Config("n must be ≥ 1".into()));
        }
        self.model()?;
        self.test_config(self.seed).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub method: Method,
    pub theta_hat: f64,
    pub sigma2_hat: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub reject: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

/// One table row. `bias` is `mean(θ̂) − 0.5` under both hypotheses and
/// `rejection_rate` is the type-1 error under the null, the power otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub method: Method,
    pub alternative: bool,
    pub bias: f64,
    pub rejection_rate: f64,
    pub mean_theta: f64,
    pub trials: usize,
    pub failures: usize,
}

impl SummaryRow {
    pub fn type1(&self) -> Option<f64> {
        (!self.alternative).then_some(self.rejection_rate)
    }

    pub fn power(&self) -> Option<f64> {
        self.alternative.then_some(self.rejection_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub rows: Vec<SummaryRow>,
    /// Per-trial outcomes in (trial, method) order.
    pub outcomes: Vec<TrialOutcome>,
    pub failures: Vec<TrialFailure>,
}

impl SimSummary {
    pub fn row(&self, method: Method) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// θ̂ of every successful trial for `method`, in trial order.
    pub fn thetas(&self, method: Method) -> Vec<f64> {
        self.outcomes.iter().filter(|o| o.method == method).map(|o| o.theta_hat).collect()
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "method", "hypothesis", "bias", "type1", "power", "mean_theta", "trials", "failures"])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.method.to_string(),
                if r.alternative { "alternative" } else { "null" }.to_string(),
                r.bias.to_string(),
                opt(r.type1()),
                opt(r.power()),
                r.mean_theta.to_string(),
                r.trials.to_string(),
                r.failures.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io { path: "<summary>".into(), source: e })
    }

    pub fn write_trials_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for o in &self.outcomes {
            w.serialize(o)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<trials>".into(), source: e })
    }
}

/// Runs `config.trials` trials with the configured default method.
pub fn run_trials(config: &SimConfig, method: Method) -> Result<SimSummary> {
    run_trials_methods(config, &[method])
}

/// Each trial draws `3n` points per sample under the cutoff, splits off the
/// score set and runs every method on the same nuisance fits. Failed trials
/// are recorded, not fatal. The result does not depend on the thread count.
pub fn run_trials_methods(config: &SimConfig, methods: &[Method]) -> Result<SimSummary> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no test method requested".into()));
    }
    let model = config.model()?;
    let total = config.points_per_sample();

    let results: Vec<(usize, u64, Result<Vec<TrialOutcome>>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = rng::derive_seed(config.seed, trial as u64);
            let (xs, us) = model.sample_truncated(total, total, rng::derive_seed(seed, 0));
            let test = config.test_config(rng::derive_seed(seed, 1));
            let outcome = run_tests(&xs, &us, &test, methods).map(|reports| {
                methods
                    .iter()
                    .zip(reports)
                    .map(|(&method, r)| TrialOutcome {
                        trial,
                        method,
                        theta_hat: r.theta_hat,
                        sigma2_hat: r.sigma2_hat,
                        t_stat: r.t_stat,
                        p_value: r.p_value,
                        reject: r.reject,
                        seed,
                    })
                    .collect()
            });
            (trial, seed, outcome)
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (trial, seed, res) in results {
        match res {
            Ok(o) => outcomes.extend(o),
            Err(e) => {
                log::warn!("trial {trial} failed: {e}");
                failures.push(TrialFailure { trial, seed, message: e.to_string() });
            }
        }
    }

    let rows = methods
        .iter()
        .map(|&method| {
            let mine: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.method == method).collect();
            let thetas: Vec<f64> = mine.iter().map(|o| o.theta_hat).collect();
            let mean_theta = if thetas.is_empty() { f64::NAN } else { stats::mean(&thetas) };
            let rejections = mine.iter().filter(|o| o.reject).count();
            SummaryRow {
                n: config.n_crossfit,
                method,
                alternative: config.alternative,
                bias: mean_theta - 0.5,
                rejection_rate: if mine.is_empty() { f64::NAN } else { rejections as f64 / mine.len() as f64 },
                mean_theta,
                trials: mine.len(),
                failures: failures.len(),
            }
        })
        .collect();
    Ok(SimSummary { rows, outcomes, failures })
}
