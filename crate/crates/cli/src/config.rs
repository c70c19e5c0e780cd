//! Resolved command configurations. A resolved config fully determines a
//! command's outputs and is what the run manifest records.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use udebias::covshift::{Method, TestConfig};
use udebias::dataio::PartitionSpec;
use udebias::simlab::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    pub methods: Vec<Method>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), methods: vec![Method::Debiased] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCommandConfig {
    pub sample_f: PathBuf,
    pub sample_g: PathBuf,
    pub response: Option<String>,
    pub test: TestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCommandConfig {
    pub data: PathBuf,
    pub response: Option<String>,
    pub partition: PartitionSpec,
    pub repetitions: usize,
    pub test: TestConfig,
}

/// A command together with its resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Resolved {
    Simulate(SimulateConfig),
    Test(TestCommandConfig),
    PartitionTest(PartitionCommandConfig),
}

impl Resolved {
    pub fn name(&self) -> &'static str {
        match self {
            Resolved::Simulate(_) => "simulate",
            Resolved::Test(_) => "test",
            Resolved::PartitionTest(_) => "partition-test",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Resolved::Simulate(c) => c.sim.seed,
            Resolved::Test(c) => c.test.seed,
            Resolved::PartitionTest(c) => c.partition.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub resolved: Resolved,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<PathBuf>,
}

pub fn version_string() -> String {
    format!("udebias {}", env!("CARGO_PKG_VERSION"))
}

/// Reads a JSON config file, or the type's default when `path` is absent.
pub fn read_json<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", p.display()))
        }
    }
}

/// Partial configuration file for `test` and `partition-test`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub sample_f: Option<PathBuf>,
    pub sample_g: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    pub partition: Option<PartitionSpec>,
    pub repetitions: Option<usize>,
    pub test: Option<TestConfig>,
}
