use std::fs;
use std::path::Path;

use udebias_cli::{run_cli, EXIT_CONFIG, EXIT_OK};

fn cli(args: &[&str]) -> u8 {
    run_cli(std::iter::once("udebias").chain(args.iter().copied()))
}

fn write_samples(dir: &Path) {
    let rows = |shift: f64| {
        let mut s = String::from("a,b,y\n");
        for i in 0..150 {
            let a = ((i * 37) % 101) as f64 / 50.0 - 1.0 + shift;
            let b = ((i * 53) % 89) as f64 / 44.0 - 1.0;
            let y = a + b + ((i * 17) % 23) as f64 / 23.0;
            s.push_str(&format!("{a},{b},{y}\n"));
        }
        s
    };
    fs::write(dir.join("f.csv"), rows(0.0)).unwrap();
    fs::write(dir.join("g.csv"), rows(0.3)).unwrap();
}

#[test]
fn zero_trials_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["simulate", "--trials", "0", "--out", out.to_str().unwrap()]), EXIT_CONFIG);
}

#[test]
fn unknown_response_column_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(dir.path());
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    let code = cli(&["test", "--sample-f", &p("f.csv"), "--sample-g", &p("g.csv"), "--response", "nope", "--out", &p("out")]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn covariate_split_needs_a_column() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(dir.path());
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    assert_eq!(cli(&["partition-test", "--data", &p("f.csv"), "--kind", "covariate", "--out", &p("out")]), EXIT_CONFIG);
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(cli(&["simulate", "--no-such-flag"]), EXIT_CONFIG);
}

#[test]
fn test_command_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(dir.path());
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    let code = cli(&["test", "--sample-f", &p("f.csv"), "--sample-g", &p("g.csv"), "--method", "plugin", "--out", &p("out")]);
    assert_eq!(code, EXIT_OK);
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.starts_with("method,theta_hat,standard_error,t_stat,p_value,reject,m,n"));
    assert!(summary.lines().nth(1).unwrap().starts_with("plugin,"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "test");
    assert_eq!(manifest["config"]["test"]["method"], "plugin");
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    for (threads, out) in [("1", "a"), ("2", "b")] {
        let code = cli(&["--threads", threads, "simulate", "--n", "80", "--trials", "3", "--seed", "11", "--out", &p(out)]);
        assert_eq!(code, EXIT_OK);
    }
    for f in ["summary.csv", "trials.csv", "report.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}
