//! Small summary statistics used by the simulation and acceptance harnesses.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::normal::normal_cdf;
use crate::ustat::kahan_sum;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    kahan_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation (denominator `len − 1`).
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(values);
    (kahan_sum(values.iter().map(|v| (v - mu).powi(2))) / (values.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn std_error(values: &[f64]) -> f64 {
    std_dev(values) / (values.len() as f64).sqrt()
}

/// Median; the average of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[k]
    } else {
        0.5 * (sorted[k - 1] + sorted[k])
    })
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Small-x form converges faster here.
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut s = 0.0;
        for k in 0..50 {
            let j = (2 * k + 1) as f64;
            s += (-(j * j) * c).exp();
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against N(0, 1), with the
/// small-sample correction `(√n + 0.12 + 0.11/√n)·D` on the asymptotic law.
pub fn ks_test_normal(values: &[f64]) -> Result<KsResult> {
    if values.is_empty() {
        return Err(Error::EmptyInput("ks sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain {
            what: "ks sample value",
            value: values.iter().copied().find(|v| !v.is_finite()).unwrap_or(f64::NAN),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        let f = normal_cdf(v);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let root = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf((root + 0.12 + 0.11 / root) * d),
    })
}

/// Central `level` band for the rejection rate of `trials` Bernoulli(`p`)
/// draws, as proportions.
pub fn binomial_band(trials: u64, p: f64, level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    let dist = Binomial::new(p, trials).expect("valid binomial parameters");
    let lo = dist.inverse_cdf(tail);
    let hi = dist.inverse_cdf(1.0 - tail);
    (lo as f64 / trials as f64, hi as f64 / trials as f64)
}

/// One-sided binomial tail `P(K ≥ k)` for `K ~ Bin(trials, p)`.
pub fn binomial_upper_tail(trials: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let dist = Binomial::new(p, trials).expect("valid binomial parameters");
    dist.sf(k - 1)
}
