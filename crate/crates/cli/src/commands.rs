//! Subcommand bodies. Every output is built in memory first, so a failing
//! run leaves the output directory untouched.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use fogalloc_core::allocation::{classify, Classification};
use fogalloc_core::arrival::ArrivalModel;
use fogalloc_core::sim::{
    run_experiment, single_vmi_static_barrier_curve, time_evolution, write_barrier_csv, write_evolution_csv,
    write_sweep_csv,
};
use fogalloc_core::strategies::Strategy;
use fogalloc_core::{price_schedule, solve_thresholds, ThresholdTable};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, SweepKind};

/// Named output files, in write order.
pub type Outputs = Vec<(&'static str, Vec<u8>)>;

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: &'a str,
    seed: u64,
    units: Units,
    outputs: Vec<OutputEntry>,
    parameters: &'a RunConfig,
}

#[derive(Serialize)]
struct Units {
    time: &'static str,
    delay: &'static str,
    rate: &'static str,
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn csv<F>(write: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn model(cfg: &RunConfig) -> Result<ArrivalModel> {
    Ok(ArrivalModel::new(cfg.model.lambda, cfg.law().build()?, cfg.model.eta)?)
}

fn solved(cfg: &RunConfig) -> Result<(ThresholdTable, Outputs)> {
    let (table, revenue) = solve_thresholds(&model(cfg)?, cfg.vmi_count(), cfg.model.horizon_hours, &cfg.solver.settings())?;
    let files = vec![
        ("thresholds.csv", csv(|w| table.write_csv(w))?),
        ("revenue.csv", csv(|w| revenue.write_csv(w))?),
    ];
    Ok((table, files))
}

/// Thresholds and expected-revenue curves for the configured pool size.
pub fn solve(cfg: &RunConfig) -> Result<Outputs> {
    Ok(solved(cfg)?.1)
}

fn load_table(path: &Path, cfg: &RunConfig) -> Result<ThresholdTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table = ThresholdTable::from_csv(&text, cfg.model.eta).with_context(|| format!("parsing {}", path.display()))?;
    let horizon = cfg.model.horizon_hours;
    ensure!(
        (table.horizon() - horizon).abs() <= 1e-9 * horizon,
        "{} covers [0, {}] but the horizon is {horizon}",
        path.display(),
        table.horizon()
    );
    ensure!(
        table.n_initial() >= cfg.vmi_count(),
        "{} has {} curves but the pool has {} VMIs",
        path.display(),
        table.n_initial(),
        cfg.vmi_count()
    );
    Ok(table)
}

/// Strategy comparison, time evolution and, if configured, the static
/// barrier curve.
pub fn simulate(cfg: &RunConfig) -> Result<Outputs> {
    let mut files = Outputs::new();
    let wants_optimal = cfg.strategies().contains(&Strategy::Optimal);
    let table = match (&cfg.experiment.thresholds, wants_optimal, cfg.experiment.sweep) {
        (Some(path), _, _) => Some(Arc::new(load_table(path, cfg)?)),
        (None, true, SweepKind::None) => {
            let (table, solved_files) = solved(cfg)?;
            files.extend(solved_files);
            Some(Arc::new(table))
        }
        _ => None,
    };
    let spec = cfg.spec(table)?;
    let series = run_experiment(&spec)?;
    files.push(("sweep.csv", csv(|w| write_sweep_csv(w, &series))?));
    let evolution = time_evolution(&spec)?;
    files.push(("evolution.csv", csv(|w| write_evolution_csv(w, &evolution))?));
    if let Some(b) = &cfg.barrier {
        let points = single_vmi_static_barrier_curve(
            b.lambda,
            b.horizon_hours,
            cfg.law().build()?,
            &b.p_values,
            b.replications,
            cfg.experiment.seed,
        )?;
        files.push(("barrier.csv", csv(|w| write_barrier_csv(w, &points))?));
    }
    Ok(files)
}

/// Writes the outputs and `manifest.toml` into `dir`. Each file goes
/// through a temporary name so readers never see a half-written file.
pub fn write_outputs(dir: &Path, command: &str, cfg: &RunConfig, files: &Outputs) -> Result<()> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.experiment.seed,
        units: Units {
            time: "hours",
            delay: "ms",
            rate: "1/ms",
        },
        outputs: files
            .iter()
            .map(|(name, bytes)| OutputEntry {
                file: name.to_string(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
        parameters: cfg,
    };
    let manifest = toml::to_string(&manifest).context("serialising the manifest")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let all = files
        .iter()
        .map(|(n, b)| (*n, b.as_slice()))
        .chain(std::iter::once(("manifest.toml", manifest.as_bytes())));
    for (name, bytes) in all {
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, dir.join(name)).with_context(|| format!("renaming {}", tmp.display()))?;
    }
    Ok(())
}

/// Parses a comma-separated rate list.
pub fn parse_rates(text: &str) -> Result<Vec<f64>> {
    let rates = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad rate {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        bail!("rates must be positive, got {bad}");
    }
    Ok(rates)
}

/// One accept/reject decision against a solved table, given the rates of
/// the VMIs still available. Returns the line to print.
pub fn decide(table: &ThresholdTable, rates: &[f64], x: f64, t: f64) -> Result<String> {
    ensure!(x > 0.0 && x.is_finite(), "x must be positive, got {x}");
    ensure!(!rates.is_empty(), "need at least one available rate");
    let mut rates = rates.to_vec();
    rates.sort_by(|a, b| b.total_cmp(a));
    let n = rates.len();
    Ok(match classify(x, t, n, table)? {
        Classification::Reject => "REJECT".to_string(),
        Classification::Rank(j) => {
            let schedule = price_schedule(&rates, &table.family_at(n, t)?, table.eta())?;
            let price = schedule.price(j).expect("rank within family");
            format!("ALLOCATE rank={j} rate={} price={price:.12}", rates[j - 1])
        }
    })
}
