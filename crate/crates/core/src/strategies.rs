//! The optimal policy and the comparison baselines, all consuming the same
//! arrival stream and emitting [`AllocationRecord`] ledgers.
//!
//! Baselines other than the auction charge `r^(1/η) · min(x^(1/η), reserve)`,
//! the displaced-value price with every threshold flat at the reserve.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::allocation::{AllocationRecord, Allocator};
use crate::arrival::Arrival;
use crate::error::{Error, Result};
use crate::pricing::qoe;
use crate::threshold::ThresholdTable;
use crate::topology::SortedRates;

pub const DEFAULT_EPSILON: f64 = 0.5;
/// Auction period as a fraction of the horizon.
pub const DEFAULT_AUCTION_FRACTION: f64 = 1.0 / 24.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Optimal,
    Ideal,
    Pessimistic,
    Optimistic,
    EpsilonGreedy { epsilon: f64 },
    Auction { period: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Optimal => "optimal",
            Strategy::Ideal => "ideal",
            Strategy::Pessimistic => "pessimistic",
            Strategy::Optimistic => "optimistic",
            Strategy::EpsilonGreedy { .. } => "epsilon_greedy",
            Strategy::Auction { .. } => "auction",
        }
    }

    /// Parses a config name; `epsilon` and `period` fill the knobs.
    pub fn parse(name: &str, epsilon: f64, period: f64) -> Option<Self> {
        Some(match name {
            "optimal" => Strategy::Optimal,
            "ideal" => Strategy::Ideal,
            "pessimistic" => Strategy::Pessimistic,
            "optimistic" => Strategy::Optimistic,
            "epsilon_greedy" => Strategy::EpsilonGreedy { epsilon },
            "auction" => Strategy::Auction { period },
            _ => return None,
        })
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        match *self {
            Strategy::EpsilonGreedy { epsilon } if !(epsilon > 0.0 && epsilon <= 1.0) => {
                Err(Error::InvalidParameter {
                    name: "epsilon",
                    value: epsilon,
                    reason: "must lie in (0, 1]",
                })
            }
            Strategy::Auction { period } if !(period > 0.0 && period <= horizon) => {
                Err(Error::InvalidParameter {
                    name: "auction_period",
                    value: period,
                    reason: "must lie in (0, T]",
                })
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn flat_price(x: f64, rate: f64, eta: f64, reserve: f64) -> f64 {
    rate.powf(1.0 / eta) * x.powf(1.0 / eta).min(reserve)
}

fn record(a: &Arrival, time: f64, rank: usize, pool: &SortedRates, slot: usize, price: f64, eta: f64) -> AllocationRecord {
    let rate = pool.rates()[slot];
    AllocationRecord {
        request_id: a.id,
        time,
        x: a.x,
        rank,
        vmi: pool.ids()[slot],
        rate,
        price,
        qoe: qoe(a.x, rate, eta).unwrap_or(0.0),
    }
}

/// The threshold allocator over the whole stream, without releases.
pub fn run_optimal(arrivals: &[Arrival], table: Arc<ThresholdTable>, pool: &SortedRates) -> Result<Vec<AllocationRecord>> {
    let mut alloc = Allocator::new(table, pool.clone())?;
    for a in arrivals {
        if alloc.n_available() == 0 {
            break;
        }
        alloc.process_arrival(a.id, a.x, a.time)?;
    }
    Ok(alloc.into_ledger())
}

/// Clairvoyant assortative matching of the `N` largest characteristics to
/// the `N` best rates.
pub fn run_ideal(arrivals: &[Arrival], pool: &SortedRates, eta: f64, reserve: f64) -> Vec<AllocationRecord> {
    let mut order: Vec<&Arrival> = arrivals.iter().filter(|a| a.x > 0.0).collect();
    order.sort_by(|a, b| b.x.total_cmp(&a.x).then(a.id.cmp(&b.id)));
    let mut ledger: Vec<AllocationRecord> = order
        .into_iter()
        .take(pool.len())
        .enumerate()
        .map(|(slot, a)| {
            let price = flat_price(a.x, pool.rates()[slot], eta, reserve);
            record(a, a.time, slot + 1, pool, slot, price, eta)
        })
        .collect();
    ledger.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.request_id.cmp(&b.request_id)));
    ledger
}

fn run_static(arrivals: &[Arrival], pool: &SortedRates, eta: f64, reserve: f64, best_first: bool) -> Vec<AllocationRecord> {
    let bar = reserve.powf(eta);
    let mut next_best = 0usize;
    let mut next_worst = pool.len();
    let mut ledger = Vec::new();
    for a in arrivals {
        if next_best == next_worst {
            break;
        }
        if a.x < bar {
            continue;
        }
        let (slot, rank) = if best_first {
            next_best += 1;
            (next_best - 1, 1)
        } else {
            next_worst -= 1;
            (next_worst, next_worst - next_best + 1)
        };
        let price = flat_price(a.x, pool.rates()[slot], eta, reserve);
        ledger.push(record(a, a.time, rank, pool, slot, price, eta));
    }
    ledger
}

/// Qualifying arrivals (`x ≥ reserve^η`) take the best available VMI.
pub fn run_pessimistic(arrivals: &[Arrival], pool: &SortedRates, eta: f64, reserve: f64) -> Vec<AllocationRecord> {
    run_static(arrivals, pool, eta, reserve, true)
}

/// Qualifying arrivals take the worst available VMI.
pub fn run_optimistic(arrivals: &[Arrival], pool: &SortedRates, eta: f64, reserve: f64) -> Vec<AllocationRecord> {
    run_static(arrivals, pool, eta, reserve, false)
}

/// With probability `epsilon` an arrival gets a uniformly random available VMI.
pub fn run_epsilon_greedy<R: Rng + ?Sized>(
    arrivals: &[Arrival],
    pool: &SortedRates,
    eta: f64,
    reserve: f64,
    epsilon: f64,
    rng: &mut R,
) -> Vec<AllocationRecord> {
    let mut available: Vec<usize> = (0..pool.len()).collect();
    let mut ledger = Vec::new();
    for a in arrivals {
        if available.is_empty() {
            break;
        }
        if rng.gen::<f64>() >= epsilon {
            continue;
        }
        let k = rng.gen_range(0..available.len());
        let slot = available.remove(k);
        let price = flat_price(a.x, pool.rates()[slot], eta, reserve);
        ledger.push(record(a, a.time, k + 1, pool, slot, price, eta));
    }
    ledger
}

/// First-price auction over windows `[kΔ, (k+1)Δ)`: the highest bid in each
/// window wins the best available VMI at the window end and pays its bid.
pub fn run_periodic_auction(
    arrivals: &[Arrival],
    pool: &SortedRates,
    eta: f64,
    horizon: f64,
    period: f64,
) -> Result<Vec<AllocationRecord>> {
    Strategy::Auction { period }.validate(horizon)?;
    let windows = ((horizon / period) - 1e-12).ceil().max(1.0) as usize;
    let mut best: Vec<Option<&Arrival>> = vec![None; windows];
    for a in arrivals {
        let k = ((a.time / period).floor() as usize).min(windows - 1);
        // earliest arrival wins ties
        if best[k].is_none_or(|b| a.x > b.x) {
            best[k] = Some(a);
        }
    }
    let mut ledger = Vec::new();
    let mut next = 0usize;
    for (k, winner) in best.into_iter().enumerate() {
        if next == pool.len() {
            break;
        }
        if let Some(a) = winner {
            let close = (((k + 1) as f64) * period).min(horizon);
            ledger.push(record(a, close, 1, pool, next, a.x, eta));
            next += 1;
        }
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stream(xs: &[f64]) -> Vec<Arrival> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| Arrival {
                id: k as u64,
                time: 0.1 * (k + 1) as f64,
                x: *x,
            })
            .collect()
    }

    fn total_qoe(ledger: &[AllocationRecord]) -> f64 {
        ledger.iter().map(|r| r.qoe).sum()
    }

    #[test]
    fn ideal_pairs_assortatively() {
        let pool = SortedRates::from_rates(&[10.0, 5.0]).unwrap();
        let ledger = run_ideal(&stream(&[3.0, 1.0, 2.0]), &pool, 1.0, 1.0);
        assert_eq!(ledger.len(), 2);
        assert_abs_diff_eq!(total_qoe(&ledger), 40.0, epsilon = 1e-12);
        assert_eq!((ledger[0].x, ledger[0].rate), (3.0, 10.0));
        assert_eq!((ledger[1].x, ledger[1].rate), (2.0, 5.0));
    }

    #[test]
    fn ideal_allocates_everyone_when_short() {
        let pool = SortedRates::from_rates(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(run_ideal(&stream(&[0.1, 0.2]), &pool, 1.0, 1.0).len(), 2);
    }

    #[test]
    fn ideal_with_equal_characteristics() {
        let pool = SortedRates::from_rates(&[4.0, 1.0]).unwrap();
        let ledger = run_ideal(&stream(&[2.0, 2.0, 2.0]), &pool, 1.0, 1.0);
        assert_abs_diff_eq!(total_qoe(&ledger), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn pessimistic_consumes_best_first() {
        let pool = SortedRates::from_rates(&[1.0, 3.0, 2.0]).unwrap();
        let ledger = run_pessimistic(&stream(&[0.5, 2.0, 1.5, 4.0, 9.0]), &pool, 1.0, 1.0);
        let rates: Vec<f64> = ledger.iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![3.0, 2.0, 1.0]);
        assert_eq!(ledger[0].x, 2.0);
        assert!(ledger.iter().all(|r| r.rank == 1));
        assert!(run_pessimistic(&stream(&[0.5, 0.9]), &pool, 1.0, 1.0).is_empty());
    }

    #[test]
    fn optimistic_consumes_worst_first() {
        let pool = SortedRates::from_rates(&[1.0, 3.0, 2.0]).unwrap();
        let ledger = run_optimistic(&stream(&[2.0, 1.5, 4.0]), &pool, 1.0, 1.0);
        let rates: Vec<f64> = ledger.iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![1.0, 2.0, 3.0]);
        assert_eq!(ledger[0].rank, 3);
        assert_eq!(ledger[2].rank, 1);
        assert!(run_optimistic(&stream(&[0.5]), &pool, 1.0, 1.0).is_empty());
    }

    #[test]
    fn static_baselines_charge_reserve_price() {
        let pool = SortedRates::from_rates(&[2.0]).unwrap();
        let ledger = run_pessimistic(&stream(&[3.0]), &pool, 1.0, 1.5);
        assert_abs_diff_eq!(ledger[0].price, 3.0, epsilon = 1e-12);
        assert!(ledger[0].price <= ledger[0].qoe);
    }

    #[test]
    fn epsilon_extremes() {
        let pool = SortedRates::from_rates(&[1.0, 2.0]).unwrap();
        let arrivals = stream(&[0.1, 0.2, 0.3, 0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let all = run_epsilon_greedy(&arrivals, &pool, 1.0, 1.0, 1.0, &mut rng);
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].request_id, 0);
        assert_eq!(all[1].request_id, 1);
        let none = run_epsilon_greedy(&arrivals, &pool, 1.0, 1.0, 0.0, &mut rng);
        assert!(none.is_empty());
    }

    #[test]
    fn auction_window_winner_pays_bid() {
        let pool = SortedRates::from_rates(&[1.0, 4.0]).unwrap();
        let arrivals = vec![
            Arrival { id: 1, time: 0.1, x: 2.0 },
            Arrival { id: 2, time: 0.2, x: 5.0 },
            Arrival { id: 3, time: 0.3, x: 3.0 },
        ];
        let ledger = run_periodic_auction(&arrivals, &pool, 1.0, 2.0, 0.5).unwrap();
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger[0].request_id, 2);
        assert_eq!(ledger[0].price, 5.0);
        assert_eq!(ledger[0].rate, 4.0);
        assert_eq!(ledger[0].time, 0.5);
    }

    #[test]
    fn auction_skips_empty_windows_and_caps_allocations() {
        let pool = SortedRates::from_rates(&[1.0, 2.0]).unwrap();
        let arrivals = stream(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        // windows of 0.25 over [0, 1]: arrivals at 0.1..0.9
        let ledger = run_periodic_auction(&arrivals, &pool, 1.0, 1.0, 0.25).unwrap();
        assert_eq!(ledger.len(), 2);
        let sparse = vec![Arrival { id: 9, time: 0.9, x: 1.0 }];
        let ledger = run_periodic_auction(&sparse, &pool, 1.0, 1.0, 0.25).unwrap();
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger[0].time, 1.0);
        assert!(run_periodic_auction(&sparse, &pool, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::Optimal,
            Strategy::Ideal,
            Strategy::Pessimistic,
            Strategy::Optimistic,
            Strategy::EpsilonGreedy { epsilon: 0.5 },
            Strategy::Auction { period: 0.5 },
        ] {
            assert_eq!(Strategy::parse(s.name(), 0.5, 0.5), Some(s));
        }
        assert_eq!(Strategy::parse("greedy", 0.5, 0.5), None);
        assert!(Strategy::EpsilonGreedy { epsilon: 1.5 }.validate(1.0).is_err());
        assert!(Strategy::Auction { period: 2.0 }.validate(1.0).is_err());
    }
}
