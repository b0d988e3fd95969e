//! End-to-end runs of the `fogalloc` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fogalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fogalloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(dir: &Path, command: &str, config: &Path, extra: &[&str]) -> Output {
    let out = dir.join("out");
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fogalloc(&args)
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

const HUNDRED_VMIS: &str = r#"
[model]
law = "exponential"
alpha = 1.0
lambda = 10.0
horizon_hours = 12.0

[topology]
tau_o_ms = 0.1
processing_delays = "fixed"
[[topology.nodes]]
latency_ms = 0.1
vmi_count = 100
processing_ms = [
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
  0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
]
"#;

#[test]
fn solve_writes_a_hundred_curves_meeting_at_the_reserve() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), HUNDRED_VMIS);
    assert_ok(&run(dir.path(), "solve", &cfg, &[]));
    let (header, rows) = read_csv(&dir.path().join("out/thresholds.csv"));
    assert_eq!(header.len(), 101);
    assert_eq!(header[100], "y_100");
    let last = rows.last().unwrap();
    assert_eq!(last[0].parse::<f64>().unwrap(), 12.0);
    for cell in &last[1..] {
        assert_eq!(cell.parse::<f64>().unwrap(), 1.0);
    }
    // strictly ordered before the horizon, up to the 12-digit print
    // resolution: the deepest curves sit within 1e-11 of the reserve at t=0
    let first: Vec<f64> = rows[0][1..].iter().map(|c| c.parse().unwrap()).collect();
    for w in first.windows(2) {
        assert!(w[0] >= w[1]);
        if w[1] > 1.0 + 1e-9 {
            assert!(w[0] > w[1]);
        }
    }
    assert!(first[49] > 1.0 + 1e-6);
    assert!(dir.path().join("out/revenue.csv").exists());
    let manifest = fs::read_to_string(dir.path().join("out/manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"solve\""));
    assert!(manifest.contains("thresholds.csv"));
}

const UNIFORM_SINGLE: &str = r#"
[model]
law = "uniform"
beta = 10.0
lambda = 10.0
horizon_hours = 12.0

[topology]
tau_o_ms = 0.1
processing_delays = "fixed"
[[topology.nodes]]
latency_ms = 0.1
vmi_count = 1
processing_ms = [0.4]
"#;

#[test]
fn single_vmi_uniform_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), UNIFORM_SINGLE);
    assert_ok(&run(dir.path(), "solve", &cfg, &[]));
    let (_, rows) = read_csv(&dir.path().join("out/thresholds.csv"));
    // y₁(t) = β(1 − 2 / (λ(T − t) + 4))
    for row in &rows {
        let t: f64 = row[0].parse().unwrap();
        let y: f64 = row[1].parse().unwrap();
        let exact = 10.0 * (1.0 - 2.0 / (10.0 * (12.0 - t) + 4.0));
        assert!((y - exact).abs() <= 1e-3, "t={t}: {y} vs {exact}");
    }
}

#[test]
fn malformed_config_fails_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &UNIFORM_SINGLE.replace("beta = 10.0", "beta = 10.0\nbogus = 1"));
    let o = run(dir.path(), "solve", &cfg, &[]);
    assert!(!o.status.success());
    assert!(!dir.path().join("out").exists());

    let cfg = write_config(dir.path(), &UNIFORM_SINGLE.replace("beta = 10.0", "beta = -1.0"));
    let o = run(dir.path(), "simulate", &cfg, &[]);
    assert!(!o.status.success());
    assert!(!dir.path().join("out").exists());
}

const SMALL_SIM: &str = r#"
[model]
law = "exponential"
alpha = 1.0
lambda = 10.0
horizon_hours = 12.0

[topology]
tau_o_ms = 0.1
processing_range_ms = [0.2, 1.0]
[[topology.nodes]]
latency_ms = 0.1
vmi_count = 4
[[topology.nodes]]
latency_ms = 0.6
vmi_count = 4

[solver]
grid_intervals = 400

[experiment]
replications = 40
seed = 7
evolution_points = 12

[barrier]
lambda = 10.0
horizon_hours = 12.0
p_values = [1.0, 2.0, 3.0]
replications = 200
"#;

#[test]
fn simulate_covers_six_strategies_and_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg_a = write_config(a.path(), SMALL_SIM);
    let cfg_b = write_config(b.path(), SMALL_SIM);
    assert_ok(&run(a.path(), "simulate", &cfg_a, &["--threads", "1"]));
    assert_ok(&run(b.path(), "simulate", &cfg_b, &["--threads", "3"]));
    for name in ["sweep.csv", "evolution.csv", "barrier.csv", "thresholds.csv", "revenue.csv"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs across thread counts");
    }
    let (header, rows) = read_csv(&a.path().join("out/sweep.csv"));
    assert_eq!(header[0], "sweep_value");
    let names: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(
        names,
        ["optimal", "ideal", "pessimistic", "optimistic", "epsilon_greedy", "auction"]
    );
    let (_, evo) = read_csv(&a.path().join("out/evolution.csv"));
    assert_eq!(evo.len(), 13 * 6);

    // a different seed changes the estimates
    assert_ok(&run(b.path(), "simulate", &cfg_b, &["--seed", "8"]));
    let x = fs::read(a.path().join("out/sweep.csv")).unwrap();
    let y = fs::read(b.path().join("out/sweep.csv")).unwrap();
    assert_ne!(x, y);
    let manifest = fs::read_to_string(b.path().join("out/manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 8"));
}

#[test]
fn decide_follows_the_thresholds() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), UNIFORM_SINGLE);
    assert_ok(&run(dir.path(), "solve", &cfg, &[]));
    let table = dir.path().join("out/thresholds.csv");
    let table = table.to_str().unwrap();
    // y₁(0) ≈ 9.839, y₁(12) = 5
    let decide = |x: &str, t: &str| fogalloc(&["decide", "--thresholds", table, "--rates", "1.5", "--x", x, "--t", t]);
    let o = decide("9.0", "0");
    assert_ok(&o);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "REJECT");
    let o = decide("9.9", "0");
    assert_ok(&o);
    let line = String::from_utf8_lossy(&o.stdout).trim().to_string();
    assert!(line.starts_with("ALLOCATE rank=1 rate=1.5 price="), "{line}");
    let price: f64 = line.rsplit('=').next().unwrap().parse().unwrap();
    let y0 = 10.0 * (1.0 - 2.0 / 124.0);
    assert!((price - 1.5 * y0).abs() < 1e-3, "{price}");
    let o = decide("6.0", "12");
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ALLOCATE rank=1 rate=1.5 price=7.500000000000");
    // past the horizon
    assert!(!decide("9.9", "12.5").status.success());
    // more rates than curves
    let o = fogalloc(&["decide", "--thresholds", table, "--rates", "1,1", "--x", "9.9", "--t", "0"]);
    assert!(!o.status.success());
}
