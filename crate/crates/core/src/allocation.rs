//! Online allocation and pricing against a precomputed threshold table.
//!
//! With `N_t` VMIs available the active family is curves `y_1 … y_{N_t}`;
//! an allocation drops the lowest curve and a release restores it.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::format_sig;
use crate::pricing::{price_schedule, qoe};
use crate::threshold::ThresholdTable;
use crate::topology::{SortedRates, VmiId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// 1-based rank among the available VMIs.
    Rank(usize),
    Reject,
}

/// Rank `j` with `x ∈ [y_j(t), y_{j−1}(t))` under the family for
/// `n_available` VMIs, or `Reject` below `y_{n_available}(t)`.
pub fn classify(x: f64, t: f64, n_available: usize, table: &ThresholdTable) -> Result<Classification> {
    if n_available > table.n_initial() {
        return Err(Error::IndexOutOfRange {
            what: "family size",
            index: n_available,
            max: table.n_initial(),
        });
    }
    if n_available == 0 {
        // still validates t
        table.excess_at(1, t)?;
        return Ok(Classification::Reject);
    }
    // compare on the excess scale so near-horizon curves stay distinct
    let gap = x.max(0.0).powf(1.0 / table.eta()) - table.reserve();
    for j in 1..=n_available {
        if gap >= table.excess_at(j, t)? {
            return Ok(Classification::Rank(j));
        }
    }
    Ok(Classification::Reject)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRecord {
    pub request_id: u64,
    pub time: f64,
    pub x: f64,
    /// Rank among the VMIs available at decision time (1 = best).
    pub rank: usize,
    pub vmi: VmiId,
    pub rate: f64,
    pub price: f64,
    pub qoe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Allocated(AllocationRecord),
    Rejected { request_id: u64, time: f64, x: f64 },
}

impl Decision {
    pub fn record(&self) -> Option<&AllocationRecord> {
        match self {
            Decision::Allocated(r) => Some(r),
            Decision::Rejected { .. } => None,
        }
    }
}

/// Mutable state of the online allocator.
#[derive(Debug, Clone)]
pub struct Allocator {
    table: Arc<ThresholdTable>,
    pool: SortedRates,
    /// Indices into `pool`, ascending, so rates stay descending.
    available: Vec<usize>,
    clock: f64,
    ledger: Vec<AllocationRecord>,
    live: BTreeMap<u64, usize>,
}

impl Allocator {
    pub fn new(table: Arc<ThresholdTable>, pool: SortedRates) -> Result<Self> {
        if pool.len() > table.n_initial() {
            return Err(Error::IndexOutOfRange {
                what: "VMI count",
                index: pool.len(),
                max: table.n_initial(),
            });
        }
        Ok(Self {
            available: (0..pool.len()).collect(),
            table,
            pool,
            clock: 0.0,
            ledger: Vec::new(),
            live: BTreeMap::new(),
        })
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn n_available(&self) -> usize {
        self.available.len()
    }

    pub fn available_rates(&self) -> Vec<f64> {
        self.available.iter().map(|k| self.pool.rates()[*k]).collect()
    }

    pub fn available_ids(&self) -> Vec<VmiId> {
        self.available.iter().map(|k| self.pool.ids()[*k]).collect()
    }

    pub fn ledger(&self) -> &[AllocationRecord] {
        &self.ledger
    }

    pub fn into_ledger(self) -> Vec<AllocationRecord> {
        self.ledger
    }

    pub fn live_allocations(&self) -> usize {
        self.live.len()
    }

    fn advance(&mut self, t: f64) -> Result<()> {
        if t < self.clock {
            return Err(Error::ClockRegression {
                t,
                clock: self.clock,
            });
        }
        self.clock = t;
        Ok(())
    }

    /// One step of the online policy for an arriving request.
    pub fn process_arrival(&mut self, request_id: u64, x: f64, t: f64) -> Result<Decision> {
        let horizon = self.table.horizon();
        if t > horizon || t.is_nan() {
            return Err(Error::HorizonExpired { t, horizon });
        }
        if self.live.contains_key(&request_id) {
            return Err(Error::DuplicateRequest(request_id));
        }
        self.advance(t)?;
        let rejected = Decision::Rejected {
            request_id,
            time: t,
            x,
        };
        let n = self.available.len();
        if n == 0 {
            return Ok(rejected);
        }
        let rank = match classify(x, t, n, &self.table)? {
            Classification::Reject => return Ok(rejected),
            Classification::Rank(j) => j,
        };
        let rates = self.available_rates();
        let thresholds = self.table.family_at(n, t)?;
        let schedule = price_schedule(&rates, &thresholds, self.table.eta())?;
        let price = schedule.price(rank).expect("rank within family");
        let slot = self.available.remove(rank - 1);
        let rate = self.pool.rates()[slot];
        let record = AllocationRecord {
            request_id,
            time: t,
            x,
            rank,
            vmi: self.pool.ids()[slot],
            rate,
            price,
            qoe: qoe(x, rate, self.table.eta())?,
        };
        self.live.insert(request_id, slot);
        self.ledger.push(record.clone());
        Ok(Decision::Allocated(record))
    }

    /// Returns the VMI held by `request_id` to the pool.
    pub fn release(&mut self, request_id: u64, t: f64) -> Result<()> {
        if !self.live.contains_key(&request_id) {
            return Err(Error::UnknownAllocation(request_id));
        }
        self.advance(t)?;
        let slot = self.live.remove(&request_id).expect("checked above");
        let at = self.available.partition_point(|k| *k < slot);
        self.available.insert(at, slot);
        Ok(())
    }
}

/// Ledger CSV: `request_id, t_arrival, x, decision, rank, node, vmi, price, qoe`.
pub fn write_decisions_csv<W: Write>(mut w: W, decisions: &[Decision]) -> io::Result<()> {
    writeln!(w, "request_id,t_arrival,x,decision,rank,node,vmi,price,qoe")?;
    for d in decisions {
        match d {
            Decision::Allocated(r) => writeln!(
                w,
                "{},{},{},ALLOCATE,{},{},{},{},{}",
                r.request_id,
                format_sig(r.time, 12),
                format_sig(r.x, 12),
                r.rank,
                r.vmi.node,
                r.vmi.vmi,
                format_sig(r.price, 12),
                format_sig(r.qoe, 12)
            )?,
            Decision::Rejected { request_id, time, x } => writeln!(
                w,
                "{},{},{},REJECT,,,,,",
                request_id,
                format_sig(*time, 12),
                format_sig(*x, 12)
            )?,
        }
    }
    Ok(())
}
