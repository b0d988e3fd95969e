//! Monte Carlo replication driver, sweeps, time evolution and the
//! single-VMI static-barrier curve.
//!
//! Replication `k` draws from `ChaCha8(seed)` on stream `(k << 8) | tag`,
//! so results do not depend on thread count or scheduling. Every strategy in
//! a replication sees the same arrivals and the same topology.

use std::io::{self, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::allocation::AllocationRecord;
use crate::arrival::{ArrivalModel, CharacteristicLaw, Exponential, Uniform};
use crate::error::{Error, Result};
use crate::numeric::format_sig;
use crate::strategies::{
    run_epsilon_greedy, run_ideal, run_optimal, run_optimistic, run_periodic_auction, run_pessimistic, Strategy,
};
use crate::threshold::{solve_thresholds, SolverSettings, ThresholdTable};
use crate::topology::{FogTopology, SortedRates};

const TAG_ARRIVALS: u64 = 1;
const TAG_TOPOLOGY: u64 = 2;
const TAG_EPSILON: u64 = 3;
const TAG_BARRIER: u64 = 4;

/// Random stream for one replication and purpose.
pub fn replication_rng(seed: u64, replication: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replication << 8) | tag);
    rng
}

/// Law of the transformed characteristic.
#[derive(Debug, Clone)]
pub enum LawSpec {
    Exponential { alpha: f64 },
    Uniform { beta: f64 },
    Custom(Arc<dyn CharacteristicLaw>),
}

impl LawSpec {
    pub fn build(&self) -> Result<Arc<dyn CharacteristicLaw>> {
        Ok(match self {
            LawSpec::Exponential { alpha } => Arc::new(Exponential::new(*alpha)?),
            LawSpec::Uniform { beta } => Arc::new(Uniform::new(*beta)?),
            LawSpec::Custom(law) => Arc::clone(law),
        })
    }

    /// Same family rescaled to the given mean.
    pub fn with_mean(&self, mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mean",
                value: mean,
                reason: "must be positive",
            });
        }
        match self {
            LawSpec::Exponential { .. } => Ok(LawSpec::Exponential { alpha: 1.0 / mean }),
            LawSpec::Uniform { .. } => Ok(LawSpec::Uniform { beta: 2.0 * mean }),
            LawSpec::Custom(_) => Err(Error::InvalidParameter {
                name: "mean",
                value: mean,
                reason: "custom laws cannot be rescaled",
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub enum TopologySpec {
    Fixed(FogTopology),
    /// `(latency_ms, vmi_count)` per node; processing delays drawn once per
    /// replication from `processing_range_ms`.
    Sampled {
        nodes: Vec<(f64, usize)>,
        processing_range_ms: (f64, f64),
        other_delay_ms: f64,
    },
}

impl TopologySpec {
    pub fn vmi_count(&self) -> usize {
        match self {
            TopologySpec::Fixed(t) => t.vmi_count(),
            TopologySpec::Sampled { nodes, .. } => nodes.iter().map(|n| n.1).sum(),
        }
    }

    fn realise(&self, seed: u64, replication: u64) -> Result<SortedRates> {
        match self {
            TopologySpec::Fixed(t) => Ok(t.sort_and_map()),
            TopologySpec::Sampled {
                nodes,
                processing_range_ms,
                other_delay_ms,
            } => {
                let mut rng = replication_rng(seed, replication, TAG_TOPOLOGY);
                Ok(FogTopology::sampled(nodes, *processing_range_ms, *other_delay_ms, &mut rng)?.sort_and_map())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    None,
    Lambda(Vec<f64>),
    Mean(Vec<f64>),
}

impl Sweep {
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::Lambda(_) => "lambda",
            Sweep::Mean(_) => "mean",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub law: LawSpec,
    /// Arrivals per hour.
    pub lambda: f64,
    pub eta: f64,
    /// Horizon in hours.
    pub horizon: f64,
    pub topology: TopologySpec,
    pub strategies: Vec<Strategy>,
    pub replications: usize,
    pub seed: u64,
    pub sweep: Sweep,
    pub solver: SolverSettings,
    /// Evolution grid intervals on `[0, T]`.
    pub evolution_points: usize,
    /// Pre-solved table; used only when there is no sweep.
    pub thresholds: Option<Arc<ThresholdTable>>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter {
                name: "replications",
                value: 0.0,
                reason: "need at least one replication",
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon,
                reason: "must be positive and finite",
            });
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidParameter {
                name: "strategies",
                value: 0.0,
                reason: "need at least one strategy",
            });
        }
        for s in &self.strategies {
            s.validate(self.horizon)?;
        }
        if self.evolution_points == 0 {
            return Err(Error::InvalidParameter {
                name: "evolution_points",
                value: 0.0,
                reason: "need at least one interval",
            });
        }
        match &self.sweep {
            Sweep::Lambda(v) | Sweep::Mean(v) => {
                if v.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "sweep_values",
                        value: 0.0,
                        reason: "sweep range is empty",
                    });
                }
                if let Some(bad) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                    return Err(Error::InvalidParameter {
                        name: "sweep_values",
                        value: *bad,
                        reason: "must be positive",
                    });
                }
            }
            Sweep::None => {}
        }
        Ok(())
    }

    /// `(sweep value, model)` per sweep point.
    fn points(&self) -> Result<Vec<(Option<f64>, ArrivalModel)>> {
        let base = ArrivalModel::new(self.lambda, self.law.build()?, self.eta)?;
        let wrap = |value: f64, r: Result<ArrivalModel>| {
            r.map(|m| (Some(value), m)).map_err(|e| Error::SweepPoint {
                value,
                source: Box::new(e),
            })
        };
        match &self.sweep {
            Sweep::None => Ok(vec![(None, base)]),
            Sweep::Lambda(v) => v.iter().map(|l| wrap(*l, base.with_lambda(*l))).collect(),
            Sweep::Mean(v) => v
                .iter()
                .map(|m| {
                    let law = self.law.with_mean(*m).and_then(|l| l.build());
                    wrap(*m, law.and_then(|l| ArrivalModel::new(self.lambda, l, self.eta)))
                })
                .collect(),
        }
    }
}

/// Outcome of one strategy on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyOutcome {
    pub revenue: f64,
    pub total_qoe: f64,
    pub allocations: usize,
    pub arrivals: usize,
}

impl StrategyOutcome {
    /// Total QoE divided by the number of arrivals, served or not.
    pub fn qoe_per_request(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.total_qoe / self.arrivals as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `√R`.
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        let xs: Vec<f64> = xs.into_iter().collect();
        for x in &xs {
            n += 1;
            sum += x;
        }
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = sum / n as f64;
        for x in &xs {
            sq += (x - mean) * (x - mean);
        }
        let se = if n > 1 {
            (sq / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `None` without a sweep.
    pub sweep_value: Option<f64>,
    pub strategy: Strategy,
    pub revenue: Estimate,
    pub total_qoe: Estimate,
    pub qoe_per_request: Estimate,
}

/// One sweep point with the raw per-replication outcomes, indexed
/// `[replication][strategy]` in `ExperimentSpec::strategies` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcomes {
    pub sweep_value: Option<f64>,
    pub outcomes: Vec<Vec<StrategyOutcome>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub strategies: Vec<Strategy>,
    pub rows: Vec<SweepRow>,
    pub points: Vec<PointOutcomes>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRow {
    pub t: f64,
    pub strategy: Strategy,
    pub mean_allocated: f64,
    pub mean_cum_qoe: f64,
}

struct Context {
    model: ArrivalModel,
    reserve: f64,
    table: Option<Arc<ThresholdTable>>,
}

fn context(spec: &ExperimentSpec, model: ArrivalModel, allow_preset: bool) -> Result<Context> {
    let reserve = model.reserve()?;
    let table = if spec.strategies.contains(&Strategy::Optimal) {
        match (&spec.thresholds, allow_preset) {
            (Some(t), true) => Some(Arc::clone(t)),
            _ => {
                let n = spec.topology.vmi_count();
                Some(Arc::new(solve_thresholds(&model, n, spec.horizon, &spec.solver)?.0))
            }
        }
    } else {
        None
    };
    Ok(Context { model, reserve, table })
}

fn run_ledgers(spec: &ExperimentSpec, ctx: &Context, replication: u64) -> Result<(usize, Vec<Vec<AllocationRecord>>)> {
    let mut rng = replication_rng(spec.seed, replication, TAG_ARRIVALS);
    let arrivals = ctx.model.sample_arrivals(spec.horizon, &mut rng);
    let pool = spec.topology.realise(spec.seed, replication)?;
    let eta = spec.eta;
    let mut ledgers = Vec::with_capacity(spec.strategies.len());
    for s in &spec.strategies {
        let ledger = match *s {
            Strategy::Optimal => run_optimal(
                &arrivals,
                Arc::clone(ctx.table.as_ref().expect("solved when optimal is requested")),
                &pool,
            )?,
            Strategy::Ideal => run_ideal(&arrivals, &pool, eta, ctx.reserve),
            Strategy::Pessimistic => run_pessimistic(&arrivals, &pool, eta, ctx.reserve),
            Strategy::Optimistic => run_optimistic(&arrivals, &pool, eta, ctx.reserve),
            Strategy::EpsilonGreedy { epsilon } => {
                let mut rng = replication_rng(spec.seed, replication, TAG_EPSILON);
                run_epsilon_greedy(&arrivals, &pool, eta, ctx.reserve, epsilon, &mut rng)
            }
            Strategy::Auction { period } => run_periodic_auction(&arrivals, &pool, eta, spec.horizon, period)?,
        };
        ledgers.push(ledger);
    }
    Ok((arrivals.len(), ledgers))
}

fn outcome(arrivals: usize, ledger: &[AllocationRecord]) -> StrategyOutcome {
    StrategyOutcome {
        revenue: ledger.iter().map(|r| r.price).sum(),
        total_qoe: ledger.iter().map(|r| r.qoe).sum(),
        allocations: ledger.len(),
        arrivals,
    }
}

/// Runs every strategy on `R` paired replications at each sweep point.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricSeries> {
    spec.validate()?;
    let allow_preset = spec.sweep == Sweep::None;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (value, model) in spec.points()? {
        let wrap = |e: Error| match (value, e) {
            (_, e @ Error::SweepPoint { .. }) => e,
            (Some(value), e) => Error::SweepPoint {
                value,
                source: Box::new(e),
            },
            (None, e) => e,
        };
        let ctx = context(spec, model, allow_preset).map_err(wrap)?;
        let outcomes: Vec<Vec<StrategyOutcome>> = (0..spec.replications as u64)
            .into_par_iter()
            .map(|k| {
                run_ledgers(spec, &ctx, k)
                    .map(|(n, ledgers)| ledgers.iter().map(|l| outcome(n, l)).collect())
            })
            .collect::<Result<_>>()
            .map_err(wrap)?;
        for (j, s) in spec.strategies.iter().enumerate() {
            rows.push(SweepRow {
                sweep_value: value,
                strategy: *s,
                revenue: Estimate::from_samples(outcomes.iter().map(|o| o[j].revenue)),
                total_qoe: Estimate::from_samples(outcomes.iter().map(|o| o[j].total_qoe)),
                qoe_per_request: Estimate::from_samples(outcomes.iter().map(|o| o[j].qoe_per_request())),
            });
        }
        points.push(PointOutcomes {
            sweep_value: value,
            outcomes,
        });
    }
    Ok(MetricSeries {
        strategies: spec.strategies.clone(),
        rows,
        points,
    })
}

/// Mean allocation count and cumulative QoE on `evolution_points + 1`
/// evenly spaced times, at the base parameters (any sweep is ignored).
///
/// The clairvoyant benchmark has no online trajectory and is reported as a
/// flat line at its end-of-horizon totals.
pub fn time_evolution(spec: &ExperimentSpec) -> Result<Vec<EvolutionRow>> {
    spec.validate()?;
    let model = ArrivalModel::new(spec.lambda, spec.law.build()?, spec.eta)?;
    let ctx = context(spec, model, true)?;
    let grid: Vec<f64> = (0..=spec.evolution_points)
        .map(|k| spec.horizon * k as f64 / spec.evolution_points as f64)
        .collect();
    let n_strat = spec.strategies.len();
    // per replication: [strategy][grid] of (count, cumulative qoe)
    let traces: Vec<Vec<Vec<(f64, f64)>>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|k| {
            let (_, ledgers) = run_ledgers(spec, &ctx, k)?;
            Ok(ledgers
                .iter()
                .zip(&spec.strategies)
                .map(|(ledger, s)| {
                    let mut sorted: Vec<&AllocationRecord> = ledger.iter().collect();
                    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
                    let total = sorted.iter().map(|r| r.qoe).sum::<f64>();
                    grid.iter()
                        .map(|&g| {
                            if *s == Strategy::Ideal {
                                return (sorted.len() as f64, total);
                            }
                            let upto = sorted.partition_point(|r| r.time <= g);
                            (upto as f64, sorted[..upto].iter().map(|r| r.qoe).sum())
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let r = spec.replications as f64;
    let mut rows = Vec::with_capacity(grid.len() * n_strat);
    for (m, &t) in grid.iter().enumerate() {
        for (j, s) in spec.strategies.iter().enumerate() {
            let (mut c, mut q) = (0.0, 0.0);
            for trace in &traces {
                c += trace[j][m].0;
                q += trace[j][m].1;
            }
            rows.push(EvolutionRow {
                t,
                strategy: *s,
                mean_allocated: c / r,
                mean_cum_qoe: q / r,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierPoint {
    pub p: f64,
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
}

/// `R(p) = p · (1 − exp(−λT(1 − F(p))))`: a single VMI sold at the fixed
/// barrier `p` to the first arrival clearing it.
pub fn static_barrier_revenue(lambda: f64, horizon: f64, law: &dyn CharacteristicLaw, p: f64) -> f64 {
    p * -(-lambda * horizon * (1.0 - law.cdf(p))).exp_m1()
}

/// Analytic and Monte Carlo static-barrier revenue on a barrier grid.
/// All barriers share the same replicated streams.
pub fn single_vmi_static_barrier_curve(
    lambda: f64,
    horizon: f64,
    law: Arc<dyn CharacteristicLaw>,
    barriers: &[f64],
    replications: usize,
    seed: u64,
) -> Result<Vec<BarrierPoint>> {
    if let Some(bad) = barriers.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "barrier",
            value: *bad,
            reason: "must be positive",
        });
    }
    if replications == 0 {
        return Err(Error::InvalidParameter {
            name: "replications",
            value: 0.0,
            reason: "need at least one replication",
        });
    }
    let model = ArrivalModel::new(lambda, Arc::clone(&law), 1.0)?;
    // some arrival clears p iff the largest characteristic does
    let maxima: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = replication_rng(seed, k, TAG_BARRIER);
            model
                .sample_arrivals(horizon, &mut rng)
                .iter()
                .map(|a| a.x)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(barriers
        .iter()
        .map(|&p| {
            let est = Estimate::from_samples(maxima.iter().map(|m| if *m >= p { p } else { 0.0 }));
            BarrierPoint {
                p,
                analytic: static_barrier_revenue(lambda, horizon, law.as_ref(), p),
                mc_mean: est.mean,
                mc_se: est.se,
            }
        })
        .collect())
}

fn sweep_cell(v: Option<f64>) -> String {
    v.map(|v| format_sig(v, 12)).unwrap_or_default()
}

/// `sweep.csv`; the last column is the standard error of the per-request QoE.
pub fn write_sweep_csv<W: Write>(mut w: W, series: &MetricSeries) -> io::Result<()> {
    writeln!(
        w,
        "sweep_value,strategy,mean_revenue,se_revenue,mean_total_qoe,se_total_qoe,mean_qoe_per_request,se"
    )?;
    for r in &series.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            sweep_cell(r.sweep_value),
            r.strategy,
            format_sig(r.revenue.mean, 12),
            format_sig(r.revenue.se, 12),
            format_sig(r.total_qoe.mean, 12),
            format_sig(r.total_qoe.se, 12),
            format_sig(r.qoe_per_request.mean, 12),
            format_sig(r.qoe_per_request.se, 12),
        )?;
    }
    Ok(())
}

pub fn write_evolution_csv<W: Write>(mut w: W, rows: &[EvolutionRow]) -> io::Result<()> {
    writeln!(w, "t,strategy,mean_allocated,mean_cum_qoe")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            format_sig(r.t, 12),
            r.strategy,
            format_sig(r.mean_allocated, 12),
            format_sig(r.mean_cum_qoe, 12)
        )?;
    }
    Ok(())
}

pub fn write_barrier_csv<W: Write>(mut w: W, points: &[BarrierPoint]) -> io::Result<()> {
    writeln!(w, "p,analytic_revenue,mc_revenue,mc_se")?;
    for b in points {
        writeln!(
            w,
            "{},{},{},{}",
            format_sig(b.p, 12),
            format_sig(b.analytic, 12),
            format_sig(b.mc_mean, 12),
            format_sig(b.mc_se, 12)
        )?;
    }
    Ok(())
}
