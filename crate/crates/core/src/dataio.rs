//! CSV ingestion, the real-data two-sample partitions, and twice-median
//! p-value aggregation.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covshift::{run_test, LabeledPoint, TestConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

/// Numeric table with one response column. Rows are complete.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    pub columns: Vec<String>,
    pub response_name: String,
    /// Rows dropped at ingestion for empty or non-numeric cells.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, response: Vec<f64>, columns: Vec<String>, response_name: impl Into<String>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Config("a dataset needs at least one covariate".into()));
        }
        if rows.len() != response.len() || rows.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::Dimension(format!(
                "{} rows of width {} against {} responses",
                rows.len(),
                columns.len(),
                response.len()
            )));
        }
        Ok(Self { rows, response, columns, response_name: response_name.into(), dropped_rows: 0 })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn point(&self, i: usize) -> LabeledPoint {
        LabeledPoint::new(self.rows[i].clone(), self.response[i])
    }

    pub fn points(&self) -> Vec<LabeledPoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Values of a covariate column, or of the response when `name` is the response.
    pub fn column_values(&self, name: &str) -> Result<Vec<f64>> {
        if name == self.response_name {
            return Ok(self.response.clone());
        }
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Column names of a headered CSV file.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

/// Reads a headered, comma-separated file. Every column other than
/// `response` is a covariate. Rows with an empty or non-numeric cell are
/// dropped and counted; a column with no numeric cell at all is an error.
pub fn load_csv(path: impl AsRef<Path>, response: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let response_idx = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::MissingColumn(response.to_string()))?;

    let mut parsed: Vec<Vec<Option<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            parsed.push(vec![None; header.len()]);
            continue;
        }
        parsed.push(record.iter().map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite())).collect());
    }
    if parsed.is_empty() {
        return Err(Error::EmptyInput("no data rows"));
    }
    for (j, name) in header.iter().enumerate() {
        if parsed.iter().all(|row| row[j].is_none()) {
            return Err(Error::NonNumericColumn(name.clone()));
        }
    }

    let mut rows = Vec::with_capacity(parsed.len());
    let mut ys = Vec::with_capacity(parsed.len());
    let mut dropped = 0;
    for row in parsed {
        if row.iter().any(Option::is_none) {
            dropped += 1;
            continue;
        }
        let mut values: Vec<f64> = row.into_iter().flatten().collect();
        ys.push(values.remove(response_idx));
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("every row has a missing or non-numeric cell"));
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with missing or non-numeric cells", path.display());
    }
    let columns: Vec<String> = header.iter().enumerate().filter(|&(j, _)| j != response_idx).map(|(_, h)| h.clone()).collect();
    let mut ds = Dataset::new(rows, ys, columns, response)?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

/// Writes labelled points as a headered CSV, response last.
pub fn write_points_csv<W: Write>(out: W, points: &[LabeledPoint], columns: &[String], response: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = columns.iter().map(String::as_str).collect();
    header.push(response);
    w.write_record(&header)?;
    for p in points {
        if p.x.len() != columns.len() {
            return Err(Error::Dimension(format!("point has {} covariates, header has {}", p.x.len(), columns.len())));
        }
        w.write_record(p.x.iter().chain(std::iter::once(&p.y)).map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io { path: "<csv output>".into(), source: e })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    /// Uniform 50/50 split.
    Random,
    /// 50/50 split, then the second half is resampled with replacement with
    /// weights `∝ exp(xᵀα)`.
    ExpTilt {
        tilt: Vec<f64>,
        /// Tilt standardized covariates rather than raw ones.
        #[serde(default)]
        standardize: bool,
    },
    /// Median split on a covariate followed by random flips.
    CovariateSplit { column: String },
    /// Median split on the response followed by random flips.
    ResponseSplit,
}

impl fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionKind::Random => f.write_str("random"),
            PartitionKind::ExpTilt { .. } => f.write_str("exp-tilt"),
            PartitionKind::CovariateSplit { column } => write!(f, "covariate:{column}"),
            PartitionKind::ResponseSplit => f.write_str("response"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipMode {
    /// `round(f·|side|)` rows move from each side to the other.
    Symmetric,
    /// `round(f·N)` rows drawn from the whole table switch sides.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    #[serde(flatten)]
    pub kind: PartitionKind,
    #[serde(default = "default_flip_fraction")]
    pub flip_fraction: f64,
    #[serde(default = "default_flip_mode")]
    pub flip_mode: FlipMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_flip_fraction() -> f64 {
    0.05
}

fn default_flip_mode() -> FlipMode {
    FlipMode::Symmetric
}

impl PartitionSpec {
    pub fn new(kind: PartitionKind, seed: u64) -> Self {
        Self { kind, flip_fraction: default_flip_fraction(), flip_mode: default_flip_mode(), seed }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if !(0.0..0.5).contains(&self.flip_fraction) {
            return Err(Error::Config(format!("flip fraction {} outside [0, 0.5)", self.flip_fraction)));
        }
        match &self.kind {
            PartitionKind::ExpTilt { tilt, .. } if tilt.len() != ds.dim() => Err(Error::Config(format!(
                "tilt vector has length {}, the data have {} covariates",
                tilt.len(),
                ds.dim()
            ))),
            PartitionKind::ExpTilt { tilt, .. } if tilt.iter().any(|v| !v.is_finite()) => {
                Err(Error::Config("tilt vector has a non-finite entry".into()))
            }
            PartitionKind::CovariateSplit { column } => ds.column_index(column).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Splits the table into the `F` and `G` samples.
pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<(Vec<LabeledPoint>, Vec<LabeledPoint>)> {
    spec.validate(ds)?;
    if ds.len() < 2 {
        return Err(Error::InsufficientData(format!("cannot partition {} rows", ds.len())));
    }
    let mut r = rng::substream(spec.seed, 0);
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.point(i)).collect::<Vec<_>>();
    match &spec.kind {
        PartitionKind::Random => {
            let (f, g) = halves(ds.len(), &mut r);
            Ok((pick(&f), pick(&g)))
        }
        PartitionKind::ExpTilt { tilt, standardize } => {
            let (f, g) = halves(ds.len(), &mut r);
            let (mean, scale) = if *standardize { column_moments(ds) } else { (vec![0.0; ds.dim()], vec![1.0; ds.dim()]) };
            let logw: Vec<f64> = g
                .iter()
                .map(|&i| {
                    ds.rows[i]
                        .iter()
                        .zip(tilt)
                        .enumerate()
                        .map(|(j, (v, a))| a * (v - mean[j]) / scale[j])
                        .sum::<f64>()
                })
                .collect();
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            let dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("tilt weights: {e}")))?;
            let resampled: Vec<usize> = (0..g.len()).map(|_| g[dist.sample(&mut r)]).collect();
            Ok((pick(&f), pick(&resampled)))
        }
        PartitionKind::CovariateSplit { column } => {
            let (f, g) = median_split(&ds.column_values(column)?, column, spec, &mut r)?;
            Ok((pick(&f), pick(&g)))
        }
        PartitionKind::ResponseSplit => {
            let (f, g) = median_split(&ds.response, &ds.response_name, spec, &mut r)?;
            Ok((pick(&f), pick(&g)))
        }
    }
}

fn halves(n: usize, r: &mut rng::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    let g = order.split_off(n / 2);
    (order, g)
}

fn column_moments(ds: &Dataset) -> (Vec<f64>, Vec<f64>) {
    (0..ds.dim())
        .map(|j| {
            let col: Vec<f64> = ds.rows.iter().map(|r| r[j]).collect();
            let m = stats::mean(&col);
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        })
        .unzip()
}

/// `G` = rows strictly above the median, `F` = the rest, then flips.
fn median_split(values: &[f64], name: &str, spec: &PartitionSpec, r: &mut rng::Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let median = stats::median(values).ok_or(Error::EmptyInput("split column"))?;
    let (mut f, mut g): (Vec<usize>, Vec<usize>) = (0..values.len()).partition(|&i| values[i] <= median);
    if f.is_empty() || g.is_empty() {
        return Err(Error::DegenerateSplit(name.to_string()));
    }
    match spec.flip_mode {
        FlipMode::Symmetric => {
            let kf = (spec.flip_fraction * f.len() as f64).round() as usize;
            let kg = (spec.flip_fraction * g.len() as f64).round() as usize;
            f.shuffle(r);
            g.shuffle(r);
            let from_f = f.split_off(f.len() - kf);
            let from_g = g.split_off(g.len() - kg);
            f.extend(from_g);
            g.extend(from_f);
        }
        FlipMode::Global => {
            let k = (spec.flip_fraction * values.len() as f64).round() as usize;
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.shuffle(r);
            let flipped: std::collections::HashSet<usize> = order[..k].iter().copied().collect();
            let in_g: Vec<bool> = (0..values.len()).map(|i| values[i] > median).collect();
            f = (0..values.len()).filter(|i| in_g[*i] == flipped.contains(i)).collect();
            g = (0..values.len()).filter(|i| in_g[*i] != flipped.contains(i)).collect();
        }
    }
    f.sort_unstable();
    g.sort_unstable();
    Ok((f, g))
}

/// `min(1, 2·median(p))`, valid under arbitrary dependence.
pub fn twice_median_pvalue(pvals: &[f64]) -> Result<f64> {
    if let Some(&bad) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain { what: "p-value", value: bad });
    }
    let med = stats::median(pvals).ok_or(Error::EmptyInput("p-value list"))?;
    Ok((2.0 * med).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub repetition: usize,
    pub seed: u64,
    pub theta_hat: f64,
    pub standard_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub partition: String,
    pub repetitions: usize,
    pub failures: usize,
    pub mean_theta: f64,
    pub median_standard_error: f64,
    /// Twice-median aggregate of the per-repetition p-values.
    pub aggregated_p_value: f64,
    pub rejection_rate: f64,
    pub per_repetition: Vec<Repetition>,
    pub failure_messages: Vec<String>,
}

impl PartitionReport {
    pub fn write_repetitions_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.per_repetition {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<repetitions>".into(), source: e })
    }
}

/// Default repetition count for partitions with a single realization.
pub const DEFAULT_REPETITIONS: usize = 20;

/// Repeats partition and test with independent seeds derived from
/// `spec.seed`; `test_config.seed` is replaced per repetition.
pub fn repeated_partition_test(ds: &Dataset, spec: &PartitionSpec, test_config: &TestConfig, repetitions: usize) -> Result<PartitionReport> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be ≥ 1".into()));
    }
    spec.validate(ds)?;
    test_config.validate()?;
    let results: Vec<(usize, u64, Result<Repetition>)> = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = rng::derive_seed(spec.seed, rep as u64);
            let run = || {
                let part = PartitionSpec { seed: rng::derive_seed(seed, 0), ..spec.clone() };
                let (xs, us) = partition(ds, &part)?;
                let cfg = TestConfig { seed: rng::derive_seed(seed, 1), ..test_config.clone() };
                let report = run_test(&xs, &us, &cfg)?;
                Ok(Repetition {
                    repetition: rep,
                    seed,
                    theta_hat: report.theta_hat,
                    standard_error: report.standard_error(),
                    t_stat: report.t_stat,
                    p_value: report.p_value,
                    reject: report.reject,
                })
            };
            (rep, seed, run())
        })
        .collect();

    let mut per_repetition = Vec::new();
    let mut failure_messages = Vec::new();
    for (rep, _, res) in results {
        match res {
            Ok(r) => per_repetition.push(r),
            Err(e) => {
                log::warn!("repetition {rep} failed: {e}");
                failure_messages.push(format!("repetition {rep}: {e}"));
            }
        }
    }
    if per_repetition.is_empty() {
        return Err(Error::InsufficientData(format!(
            "all {repetitions} repetitions failed; first: {}",
            failure_messages.first().map_or("", String::as_str)
        )));
    }
    let thetas: Vec<f64> = per_repetition.iter().map(|r| r.theta_hat).collect();
    let ses: Vec<f64> = per_repetition.iter().map(|r| r.standard_error).collect();
    let ps: Vec<f64> = per_repetition.iter().map(|r| r.p_value).collect();
    Ok(PartitionReport {
        partition: spec.kind.to_string(),
        repetitions,
        failures: failure_messages.len(),
        mean_theta: stats::mean(&thetas),
        median_standard_error: stats::median(&ses).unwrap_or(f64::NAN),
        aggregated_p_value: twice_median_pvalue(&ps)?,
        rejection_rate: per_repetition.iter().filter(|r| r.reject).count() as f64 / per_repetition.len() as f64,
        per_repetition,
        failure_messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let rows = (0..n).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect();
        let ys = (0..n).map(|i| (n - i) as f64 * 0.5).collect();
        Dataset::new(rows, ys, vec!["a".into(), "b".into()], "y").unwrap()
    }

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_toy_csv() {
        let f = write_tmp("a,y,b\n1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(f.path(), "y").unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.columns, vec!["a", "b"]);
        assert_eq!(ds.rows[1], vec![4.0, 6.0]);
        assert_eq!(ds.response, vec![2.0, 5.0, 8.0]);
        assert_eq!(ds.dropped_rows, 0);
    }

    #[test]
    fn drops_bad_rows() {
        let f = write_tmp("a,y\n1,2\nx,5\n7,\n3,4\n");
        let ds = load_csv(f.path(), "y").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dropped_rows, 2);
    }

    #[test]
    fn ingestion_errors() {
        let f = write_tmp("a,y\n1,2\n");
        assert!(matches!(load_csv(f.path(), "z"), Err(Error::MissingColumn(c)) if c == "z"));
        let f = write_tmp("a,y,name\n1,2,foo\n3,4,bar\n");
        assert!(matches!(load_csv(f.path(), "y"), Err(Error::NonNumericColumn(c)) if c == "name"));
        assert!(matches!(load_csv("/nonexistent/file.csv", "y"), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let ds = toy(5);
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &ds.points(), &ds.columns, "y").unwrap();
        let f = write_tmp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(load_csv(f.path(), "y").unwrap(), ds);
    }

    #[test]
    fn random_partition_is_balanced_and_complete() {
        let ds = toy(100);
        let (f, g) = partition(&ds, &PartitionSpec::new(PartitionKind::Random, 3)).unwrap();
        assert_eq!((f.len(), g.len()), (50, 50));
        let mut all: Vec<f64> = f.iter().chain(&g).map(|p| p.x[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn zero_tilt_is_a_bootstrap_of_the_half() {
        let ds = toy(101);
        let spec = PartitionSpec::new(PartitionKind::ExpTilt { tilt: vec![0.0, 0.0], standardize: false }, 5);
        let (f, g) = partition(&ds, &spec).unwrap();
        assert_eq!((f.len(), g.len()), (50, 51));
        let f_keys: Vec<f64> = f.iter().map(|p| p.x[0]).collect();
        assert!(g.iter().all(|p| !f_keys.contains(&p.x[0])));
        let mut distinct: Vec<f64> = g.iter().map(|p| p.x[0]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert!(distinct.len() < 51);
    }

    #[test]
    fn strong_tilt_concentrates_on_large_values() {
        let ds = toy(200);
        let spec = PartitionSpec::new(PartitionKind::ExpTilt { tilt: vec![3.0, 0.0], standardize: true }, 1);
        let (f, g) = partition(&ds, &spec).unwrap();
        let mean = |s: &[LabeledPoint]| s.iter().map(|p| p.x[0]).sum::<f64>() / s.len() as f64;
        assert!(mean(&g) > mean(&f) + 50.0);
    }

    #[test]
    fn exact_median_split_without_flips() {
        let ds = toy(40);
        let mut spec = PartitionSpec::new(PartitionKind::CovariateSplit { column: "b".into() }, 2);
        spec.flip_fraction = 0.0;
        let (f, g) = partition(&ds, &spec).unwrap();
        let fmax = f.iter().map(|p| p.x[1]).fold(f64::NEG_INFINITY, f64::max);
        let gmin = g.iter().map(|p| p.x[1]).fold(f64::INFINITY, f64::min);
        assert!(fmax <= gmin);
        assert_eq!(f.len() + g.len(), 40);
    }

    #[test]
    fn symmetric_flips_move_rounded_counts() {
        let ds = toy(100);
        let spec = PartitionSpec::new(PartitionKind::ResponseSplit, 9);
        let (f, g) = partition(&ds, &spec).unwrap();
        let med = stats::median(&ds.response).unwrap();
        // 50 rows on each side, round(0.05·50) = 3 moved each way.
        assert_eq!(f.iter().filter(|p| p.y > med).count(), 3);
        assert_eq!(g.iter().filter(|p| p.y <= med).count(), 3);
        assert_eq!((f.len(), g.len()), (50, 50));
    }

    #[test]
    fn global_flips() {
        let ds = toy(100);
        let spec = PartitionSpec { flip_mode: FlipMode::Global, ..PartitionSpec::new(PartitionKind::ResponseSplit, 9) };
        let (f, g) = partition(&ds, &spec).unwrap();
        let med = stats::median(&ds.response).unwrap();
        let moved = f.iter().filter(|p| p.y > med).count() + g.iter().filter(|p| p.y <= med).count();
        assert_eq!(moved, 5);
        assert_eq!(f.len() + g.len(), 100);
    }

    #[test]
    fn partition_errors() {
        let ds = toy(10);
        let spec = PartitionSpec::new(PartitionKind::CovariateSplit { column: "nope".into() }, 0);
        assert!(matches!(partition(&ds, &spec), Err(Error::MissingColumn(_))));
        let flat = Dataset::new(vec![vec![1.0]; 6], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec!["c".into()], "y").unwrap();
        let spec = PartitionSpec::new(PartitionKind::CovariateSplit { column: "c".into() }, 0);
        assert!(matches!(partition(&flat, &spec), Err(Error::DegenerateSplit(_))));
        let spec = PartitionSpec::new(PartitionKind::ExpTilt { tilt: vec![1.0], standardize: false }, 0);
        assert!(matches!(partition(&ds, &spec), Err(Error::Config(_))));
        let spec = PartitionSpec { flip_fraction: 0.5, ..PartitionSpec::new(PartitionKind::Random, 0) };
        assert!(partition(&ds, &spec).is_err());
    }

    #[test]
    fn twice_median_examples() {
        assert!((twice_median_pvalue(&[0.01, 0.02, 0.03]).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(twice_median_pvalue(&[0.6, 0.7, 0.9]).unwrap(), 1.0);
        assert!((twice_median_pvalue(&[0.2]).unwrap() - 0.4).abs() < 1e-15);
        assert!((twice_median_pvalue(&[0.1, 0.4, 0.2, 0.3]).unwrap() - 0.5).abs() < 1e-15);
        assert!(twice_median_pvalue(&[]).is_err());
        assert!(twice_median_pvalue(&[1.2]).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = PartitionSpec::new(PartitionKind::ExpTilt { tilt: vec![-1.0, 1.0], standardize: false }, 4);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<PartitionSpec>(&json).unwrap(), spec);
    }
}
