//! Revenue-maximising online allocation of fog VMIs under stochastic
//! request arrivals.
//!
//! The pipeline: an [`arrival::ArrivalModel`] drives the threshold solver in
//! [`threshold`]; the resulting [`threshold::ThresholdTable`] powers the
//! online [`allocation::Allocator`], which prices through [`pricing`].
//! [`strategies`] and [`sim`] compare the policy against baselines.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod arrival;
pub mod error;
pub mod numeric;
pub mod pricing;
pub mod sim;
pub mod strategies;
pub mod threshold;
pub mod topology;

pub use allocation::{classify, Allocator, AllocationRecord, Classification, Decision};
pub use arrival::{Arrival, ArrivalModel, CharacteristicLaw, CustomLaw, Exponential, Uniform};
pub use error::{Error, Result};
pub use pricing::{price_schedule, qoe, PriceSchedule};
pub use sim::{run_experiment, time_evolution, ExperimentSpec, LawSpec, MetricSeries, Sweep, TopologySpec};
pub use strategies::Strategy;
pub use threshold::{solve_thresholds, RevenueCurve, SolverSettings, ThresholdTable};
pub use topology::{FogNode, FogTopology, SortedRates, VmiId};
