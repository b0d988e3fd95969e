//! TOML run configuration. Unknown keys are rejected; every default is
//! filled in so the effective configuration can be echoed into the manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use fogalloc_core::sim::{ExperimentSpec, LawSpec, Sweep, TopologySpec};
use fogalloc_core::strategies::{Strategy, DEFAULT_AUCTION_FRACTION, DEFAULT_EPSILON};
use fogalloc_core::threshold::SolverSettings;
use fogalloc_core::topology::{FogNode, FogTopology};
use fogalloc_core::ThresholdTable;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Exponential,
    Uniform,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub law: LawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Arrivals per hour.
    pub lambda: f64,
    #[serde(default = "one")]
    pub eta: f64,
    pub horizon_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    Fixed,
    Sampled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub tau_o_ms: f64,
    #[serde(default = "sampled")]
    pub processing_delays: DelayMode,
    #[serde(default = "default_range")]
    pub processing_range_ms: [f64; 2],
    pub nodes: Vec<NodeConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub latency_ms: f64,
    pub vmi_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_ms: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub grid_intervals: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub residual_tolerance: f64,
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            grid_intervals: s.grid_intervals,
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            residual_tolerance: s.residual_tolerance,
            damping: s.damping,
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            grid_intervals: self.grid_intervals,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            residual_tolerance: self.residual_tolerance,
            damping: self.damping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    None,
    Lambda,
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub strategies: Vec<String>,
    pub replications: usize,
    pub seed: u64,
    pub sweep: SweepKind,
    pub sweep_values: Vec<f64>,
    pub epsilon: f64,
    /// Defaults to `horizon_hours / 24`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auction_period_hours: Option<f64>,
    pub evolution_points: usize,
    /// Pre-solved `thresholds.csv`; solved on demand when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategies: ["optimal", "ideal", "pessimistic", "optimistic", "epsilon_greedy", "auction"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            replications: 1000,
            seed: 1,
            sweep: SweepKind::None,
            sweep_values: Vec::new(),
            epsilon: DEFAULT_EPSILON,
            auction_period_hours: None,
            evolution_points: 48,
            thresholds: None,
        }
    }
}

/// Single-VMI static-barrier curve; uses the configured law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub lambda: f64,
    pub horizon_hours: f64,
    pub p_values: Vec<f64>,
    #[serde(default = "barrier_replications")]
    pub replications: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn one() -> f64 {
    1.0
}

fn sampled() -> DelayMode {
    DelayMode::Sampled
}

fn default_range() -> [f64; 2] {
    [0.2, 1.0]
}

fn barrier_replications() -> usize {
    10_000
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // relative threshold paths are resolved against the config file
        if let (Some(t), Some(dir)) = (&cfg.experiment.thresholds, path.parent()) {
            if t.is_relative() {
                cfg.experiment.thresholds = Some(dir.join(t));
            }
        }
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fill_defaults(&mut self) {
        if self.experiment.auction_period_hours.is_none() {
            self.experiment.auction_period_hours = Some(self.model.horizon_hours * DEFAULT_AUCTION_FRACTION);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.model.law {
            LawKind::Exponential if self.model.alpha.is_none() => bail!("model.alpha is required for the exponential law"),
            LawKind::Uniform if self.model.beta.is_none() => bail!("model.beta is required for the uniform law"),
            _ => {}
        }
        if self.topology.nodes.is_empty() {
            bail!("topology.nodes must list at least one node");
        }
        for (k, n) in self.topology.nodes.iter().enumerate() {
            if n.vmi_count == 0 {
                bail!("topology.nodes[{k}].vmi_count must be positive");
            }
            match (self.topology.processing_delays, &n.processing_ms) {
                (DelayMode::Fixed, None) => bail!("topology.nodes[{k}].processing_ms is required with fixed delays"),
                (DelayMode::Fixed, Some(p)) if p.len() != n.vmi_count => {
                    bail!("topology.nodes[{k}].processing_ms has {} entries, expected {}", p.len(), n.vmi_count)
                }
                (DelayMode::Sampled, Some(_)) => {
                    bail!("topology.nodes[{k}].processing_ms is only allowed with fixed delays")
                }
                _ => {}
            }
        }
        for name in &self.experiment.strategies {
            if Strategy::parse(name, 0.5, 1.0).is_none() {
                bail!("unknown strategy {name:?}");
            }
        }
        match self.experiment.sweep {
            SweepKind::None if !self.experiment.sweep_values.is_empty() => {
                bail!("experiment.sweep_values given without a sweep axis")
            }
            SweepKind::Lambda | SweepKind::Mean if self.experiment.sweep_values.is_empty() => {
                bail!("experiment.sweep_values must be nonempty for a sweep")
            }
            _ => {}
        }
        if self.experiment.sweep != SweepKind::None && self.experiment.thresholds.is_some() {
            bail!("experiment.thresholds cannot be combined with a sweep");
        }
        self.spec(None)?.validate()?;
        Ok(())
    }

    pub fn vmi_count(&self) -> usize {
        self.topology.nodes.iter().map(|n| n.vmi_count).sum()
    }

    pub fn law(&self) -> LawSpec {
        match self.model.law {
            LawKind::Exponential => LawSpec::Exponential {
                alpha: self.model.alpha.unwrap_or(f64::NAN),
            },
            LawKind::Uniform => LawSpec::Uniform {
                beta: self.model.beta.unwrap_or(f64::NAN),
            },
        }
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        let period = self
            .experiment
            .auction_period_hours
            .unwrap_or(self.model.horizon_hours * DEFAULT_AUCTION_FRACTION);
        self.experiment
            .strategies
            .iter()
            .filter_map(|s| Strategy::parse(s, self.experiment.epsilon, period))
            .collect()
    }

    pub fn topology_spec(&self) -> Result<TopologySpec> {
        let t = &self.topology;
        Ok(match t.processing_delays {
            DelayMode::Sampled => TopologySpec::Sampled {
                nodes: t.nodes.iter().map(|n| (n.latency_ms, n.vmi_count)).collect(),
                processing_range_ms: (t.processing_range_ms[0], t.processing_range_ms[1]),
                other_delay_ms: t.tau_o_ms,
            },
            DelayMode::Fixed => TopologySpec::Fixed(FogTopology::new(
                t.nodes
                    .iter()
                    .map(|n| FogNode {
                        latency_ms: n.latency_ms,
                        processing_ms: n.processing_ms.clone().unwrap_or_default(),
                    })
                    .collect(),
                t.tau_o_ms,
            )?),
        })
    }

    pub fn spec(&self, thresholds: Option<Arc<ThresholdTable>>) -> Result<ExperimentSpec> {
        let sweep = match self.experiment.sweep {
            SweepKind::None => Sweep::None,
            SweepKind::Lambda => Sweep::Lambda(self.experiment.sweep_values.clone()),
            SweepKind::Mean => Sweep::Mean(self.experiment.sweep_values.clone()),
        };
        Ok(ExperimentSpec {
            law: self.law(),
            lambda: self.model.lambda,
            eta: self.model.eta,
            horizon: self.model.horizon_hours,
            topology: self.topology_spec()?,
            strategies: self.strategies(),
            replications: self.experiment.replications,
            seed: self.experiment.seed,
            sweep,
            solver: self.solver.settings(),
            evolution_points: self.experiment.evolution_points,
            thresholds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
law = "exponential"
alpha = 1.0
lambda = 10.0
horizon_hours = 12.0

[topology]
tau_o_ms = 0.1
[[topology.nodes]]
latency_ms = 0.1
vmi_count = 3
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn defaults_are_filled() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.model.eta, 1.0);
        assert_eq!(cfg.experiment.auction_period_hours, Some(0.5));
        assert_eq!(cfg.experiment.strategies.len(), 6);
        assert_eq!(cfg.solver.grid_intervals, 2000);
        assert_eq!(cfg.vmi_count(), 3);
        // the echoed config parses back to the same values
        let echoed = toml::to_string(&cfg).unwrap();
        let again = parse(&echoed).unwrap();
        assert_eq!(toml::to_string(&again).unwrap(), echoed);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("alpha = 1.0", "alpha = 1.0\ngamma = 2.0");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn law_parameters_are_required() {
        let text = MINIMAL.replace("alpha = 1.0", "");
        assert!(parse(&text).is_err());
        let text = MINIMAL.replace("law = \"exponential\"", "law = \"uniform\"");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn fixed_delays_need_one_entry_per_vmi() {
        let text = MINIMAL.replace("tau_o_ms = 0.1", "tau_o_ms = 0.1\nprocessing_delays = \"fixed\"");
        assert!(parse(&text).is_err());
        let ok = text.replace("vmi_count = 3", "vmi_count = 3\nprocessing_ms = [0.2, 0.4, 0.6]");
        assert!(parse(&ok).is_ok());
        let short = text.replace("vmi_count = 3", "vmi_count = 3\nprocessing_ms = [0.2]");
        assert!(parse(&short).is_err());
    }

    #[test]
    fn strategies_and_sweeps_are_checked() {
        let bad = format!("{MINIMAL}\n[experiment]\nstrategies = [\"greedy\"]\n");
        assert!(parse(&bad).is_err());
        let empty = format!("{MINIMAL}\n[experiment]\nsweep = \"lambda\"\n");
        assert!(parse(&empty).is_err());
        let ok = format!("{MINIMAL}\n[experiment]\nsweep = \"mean\"\nsweep_values = [0.5, 1.0]\n");
        assert!(parse(&ok).is_ok());
        let eps = format!("{MINIMAL}\n[experiment]\nepsilon = 0.0\n");
        assert!(parse(&eps).is_err());
    }
}
