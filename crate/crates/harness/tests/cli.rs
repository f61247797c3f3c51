use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pspf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pspf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const LINEAR: &str = r#"
version = 1

[model]
kind = "linear-mixture"
dim = 2
xi = 0.1

[simulate]
steps = 10
seed = 42
"#;

#[test]
fn simulate_writes_one_row_per_step() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "lin.toml", LINEAR);
    let out = dir.path().join("data.csv");
    let o = pspf(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x_1,x_2,y_1,y_2"));
    assert_eq!(lines.clone().count(), 10);
    assert!(lines.all(|l| l.split(',').count() == 4));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("data.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "lin.toml", LINEAR);
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", "--config", s(&cfg), "--out", s(&out)];
        if let Some(sd) = seed {
            args.extend(["--seed", sd]);
        }
        assert!(pspf(&args).status.success());
        fs::read(out).unwrap()
    };
    let a = run("a.csv", None);
    assert_eq!(a, run("b.csv", None));
    assert_ne!(a, run("c.csv", Some("43")));
}

#[test]
fn zero_steps_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &LINEAR.replace("steps = 10", "steps = 0"));
    let o = pspf(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn missing_config_and_bad_version_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    let o = pspf(&["simulate", "--config", s(&dir.path().join("none.toml")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), "v.toml", &LINEAR.replace("version = 1", "version = 99"));
    assert_eq!(pspf(&["simulate", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "t.toml", &LINEAR.replace("xi = 0.1", "xi = 0.1\nbogus = 1"));
    assert_eq!(pspf(&["simulate", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
}

const EXPERIMENT: &str = r#"
version = 1

[model]
kind = "linear-mixture"
dim = 2
xi = 0.1

[experiment]
steps = 5
replications = 3
seed = 9
reference = { kind = "exact" }

[[experiment.filters]]
label = "pspf"
kind = "pspf"
n = 400

[[experiment.filters]]
label = "enkf"
kind = "enkf"
n = 400
options = { resampler = "direct" }

[[experiment.filters]]
label = "fasir"
kind = "fasir"
n = 400
"#;

fn metric_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn experiment_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "e.toml", EXPERIMENT);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = pspf(&["experiment", "--config", s(&cfg), "--out", s(&out), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(&out).unwrap(), out)
    };
    let (a, out) = run("a.csv", "1");
    let (b, _) = run("b.csv", "2");
    assert_eq!(a, b);
    assert_eq!(
        fs::read(dir.path().join("a_replications.csv")).unwrap(),
        fs::read(dir.path().join("b_replications.csv")).unwrap()
    );
    let rows = metric_rows(&out);
    for filter in ["pspf", "enkf", "fasir"] {
        let bias = rows.iter().find(|r| r[0] == filter && r[3] == "loglik_bias").unwrap();
        assert!(bias[4].parse::<f64>().unwrap().is_finite());
        assert_eq!(bias[6], "3");
        assert_eq!(bias[7], "0");
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert!(meta.to_string().contains("seconds"));
}

#[test]
fn single_replication_leaves_spread_cells_empty() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "e.toml", EXPERIMENT);
    let out = dir.path().join("one.csv");
    let o = pspf(&["experiment", "--config", s(&cfg), "--out", s(&out), "--replications", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = metric_rows(&out);
    let std = rows.iter().find(|r| r[0] == "pspf" && r[3] == "loglik_std").unwrap();
    assert_eq!(std[4], "");
    let bias = rows.iter().find(|r| r[0] == "pspf" && r[3] == "loglik_bias").unwrap();
    assert!(!bias[4].is_empty());
    assert_eq!(bias[5], "");
}

#[test]
fn unsupported_filter_is_rejected() {
    let dir = TempDir::new().unwrap();
    let text = EXPERIMENT.replace("kind = \"fasir\"", "kind = \"kalman-ish\"");
    let cfg = write_config(dir.path(), "e.toml", &text);
    let o = pspf(&["experiment", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exact_estimate_has_no_monte_carlo_spread() {
    let dir = TempDir::new().unwrap();
    let text = r#"
version = 1

[model]
kind = "linear-mixture"
dim = 2
xi = 0.1

[estimate]
steps = 40
data_seed = 1
seeds = 2
method = "kalman"
theta0 = [-2.0]
"#;
    let cfg = write_config(dir.path(), "k.toml", text);
    let out = dir.path().join("est.csv");
    let o = pspf(&["estimate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = metric_rows(&out);
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r[0], "log_xi");
    let truth: f64 = r[1].parse().unwrap();
    let est: f64 = r[3].parse().unwrap();
    let se: f64 = r[4].parse().unwrap();
    assert!((truth - 0.1f64.ln()).abs() < 1e-12);
    assert!((est - truth).abs() < 4.0 * se, "{est} vs {truth} (se {se})");
    assert_eq!(r[5].parse::<f64>().unwrap(), 0.0);
    let seeds = fs::read_to_string(dir.path().join("est_seeds.csv")).unwrap();
    assert_eq!(seeds.lines().count(), 3);
}

#[test]
fn bandwidth_trace_reacts_to_an_outlier() {
    let dir = TempDir::new().unwrap();
    let text = r#"
version = 1

[model]
kind = "linear-mixture"
dim = 2
xi = 0.1

[simulate]
steps = 30
seed = 4

[trace]
particles = 2000
seed = 3
band_coordinate = 0
"#;
    let cfg = write_config(dir.path(), "tr.toml", text);
    let data = dir.path().join("data.csv");
    assert!(pspf(&["simulate", "--config", s(&cfg), "--out", s(&data)]).status.success());
    // push y at t = 15 far into the tail of its predictive
    let mut lines: Vec<String> = fs::read_to_string(&data).unwrap().lines().map(String::from).collect();
    let mut cells: Vec<f64> = lines[15].split(',').map(|c| c.parse().unwrap()).collect();
    cells[2] += 2.5;
    cells[3] -= 2.5;
    lines[15] = cells.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    fs::write(&data, lines.join("\n") + "\n").unwrap();

    let out = dir.path().join("trace.csv");
    let o = pspf(&["bandwidth-trace", "--config", s(&cfg), "--out", s(&out), "--data", s(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut rows = text.lines();
    assert_eq!(
        rows.next(),
        Some("t,y_1,y_2,b,log_criterion,bias_share,band_lo,band_hi,log_increment,pilot")
    );
    let rows: Vec<Vec<String>> = rows.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 30);
    let b: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
    for r in &rows {
        let (lo, hi): (f64, f64) = (r[6].parse().unwrap(), r[7].parse().unwrap());
        assert!(lo < hi);
        let share: f64 = r[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&share));
    }
    let mut sorted = b.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    assert!(b[14] < median, "b at the outlier {} vs median {median}", b[14]);
}

#[test]
fn trace_rejects_mismatched_data() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x_1,y_1\n0.1,0.2\n").unwrap();
    let text = format!("{LINEAR}\n[trace]\nparticles = 100\nseed = 1\nband_coordinate = 0\n");
    let cfg = write_config(dir.path(), "t.toml", &text);
    let o = pspf(&["bandwidth-trace", "--config", s(&cfg), "--out", s(&dir.path().join("t.csv")), "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(2));
}
