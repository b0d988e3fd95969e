//! QoE of a pairing and the displaced-value price schedule.

use crate::error::{Error, Result};

/// `Φ(x, r) = (x·r)^(1/η)`.
pub fn qoe(x: f64, rate: f64, eta: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter {
            name: "x",
            value: x,
            reason: "must be positive",
        });
    }
    if !(rate > 0.0) {
        return Err(Error::InvalidParameter {
            name: "rate",
            value: rate,
            reason: "must be positive",
        });
    }
    Ok((x * rate).powf(1.0 / eta))
}

/// Prices `P_1 ≥ … ≥ P_{N_t}` for the currently available ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSchedule {
    prices: Vec<f64>,
}

impl PriceSchedule {
    /// Price of the 1-based rank `j`.
    pub fn price(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|k| self.prices.get(k).copied())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// `P_j = Σ_{i=j}^{N_t} (r_i^(1/η) − r_{i+1}^(1/η)) y_i^(1/η)` with
/// `r_{N_t+1} = 0`. Both inputs sorted descending, raw units.
pub fn price_schedule(rates: &[f64], thresholds: &[f64], eta: f64) -> Result<PriceSchedule> {
    if rates.len() != thresholds.len() {
        return Err(Error::LengthMismatch {
            left: rates.len(),
            right: thresholds.len(),
        });
    }
    if rates.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Unsorted { what: "rates" });
    }
    if thresholds.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Unsorted { what: "thresholds" });
    }
    let inv = 1.0 / eta;
    let n = rates.len();
    let mut prices = vec![0.0; n];
    let mut acc = 0.0;
    for k in (0..n).rev() {
        let next = if k + 1 < n { rates[k + 1].powf(inv) } else { 0.0 };
        acc += (rates[k].powf(inv) - next) * thresholds[k].powf(inv);
        prices[k] = acc;
    }
    Ok(PriceSchedule { prices })
}
