//! Fog nodes, their VMIs and the sorted response-rate vector.

use rand::Rng;

use crate::error::{Error, Result};

/// `(node, vmi)` identity of one VMI, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VmiId {
    pub node: usize,
    pub vmi: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FogNode {
    /// Round-trip latency `l_i` in ms.
    pub latency_ms: f64,
    /// Processing delay of each VMI in ms.
    pub processing_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FogTopology {
    nodes: Vec<FogNode>,
    other_delay_ms: f64,
}

/// Average response rate `1 / (latency + processing + other)` in 1/ms.
pub fn response_rate(latency_ms: f64, processing_ms: f64, other_ms: f64) -> Result<f64> {
    for (name, v) in [
        ("latency_ms", latency_ms),
        ("processing_ms", processing_ms),
        ("tau_o_ms", other_ms),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "delays must be positive",
            });
        }
    }
    Ok(1.0 / (latency_ms + processing_ms + other_ms))
}

impl FogTopology {
    pub fn new(nodes: Vec<FogNode>, other_delay_ms: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Topology("no fog nodes".into()));
        }
        for (k, node) in nodes.iter().enumerate() {
            if node.processing_ms.is_empty() {
                return Err(Error::Topology(format!("node {} has no VMIs", k + 1)));
            }
            for p in &node.processing_ms {
                response_rate(node.latency_ms, *p, other_delay_ms)?;
            }
        }
        Ok(Self {
            nodes,
            other_delay_ms,
        })
    }

    /// Nodes given as `(latency_ms, vmi_count)` with processing delays drawn
    /// uniformly from `[lo, hi]` ms.
    pub fn sampled<R: Rng + ?Sized>(
        nodes: &[(f64, usize)],
        processing_range_ms: (f64, f64),
        other_delay_ms: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let (lo, hi) = processing_range_ms;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Topology(format!(
                "processing range [{lo}, {hi}] must be positive and ordered"
            )));
        }
        let nodes = nodes
            .iter()
            .map(|&(latency_ms, count)| FogNode {
                latency_ms,
                processing_ms: (0..count)
                    .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                    .collect(),
            })
            .collect();
        Self::new(nodes, other_delay_ms)
    }

    pub fn nodes(&self) -> &[FogNode] {
        &self.nodes
    }

    pub fn other_delay_ms(&self) -> f64 {
        self.other_delay_ms
    }

    /// Total VMI count `N`.
    pub fn vmi_count(&self) -> usize {
        self.nodes.iter().map(|n| n.processing_ms.len()).sum()
    }

    /// Rates sorted descending with the mapping back to `(node, vmi)`.
    /// Ties keep `(node, vmi)` ascending.
    pub fn sort_and_map(&self) -> SortedRates {
        let mut entries: Vec<(f64, VmiId)> = Vec::with_capacity(self.vmi_count());
        for (i, node) in self.nodes.iter().enumerate() {
            for (j, p) in node.processing_ms.iter().enumerate() {
                let rate = response_rate(node.latency_ms, *p, self.other_delay_ms)
                    .expect("validated at construction");
                entries.push((rate, VmiId { node: i + 1, vmi: j + 1 }));
            }
        }
        entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        SortedRates {
            rates: entries.iter().map(|e| e.0).collect(),
            ids: entries.iter().map(|e| e.1).collect(),
        }
    }
}

/// `r_1 ≥ r_2 ≥ … ≥ r_N` and the mapping from sorted index to VMI.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedRates {
    rates: Vec<f64>,
    ids: Vec<VmiId>,
}

impl SortedRates {
    /// Bare rates, one single-VMI node each (node `k` holds `rates[k-1]`).
    pub fn from_rates(rates: &[f64]) -> Result<Self> {
        if let Some(bad) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "rate",
                value: *bad,
                reason: "must be positive",
            });
        }
        let mut entries: Vec<(f64, VmiId)> = rates
            .iter()
            .enumerate()
            .map(|(k, r)| (*r, VmiId { node: k + 1, vmi: 1 }))
            .collect();
        entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(Self {
            rates: entries.iter().map(|e| e.0).collect(),
            ids: entries.iter().map(|e| e.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn ids(&self) -> &[VmiId] {
        &self.ids
    }

    /// `ℳ(n)` for the 1-based sorted index `n`.
    pub fn vmi(&self, n: usize) -> Option<VmiId> {
        n.checked_sub(1).and_then(|k| self.ids.get(k).copied())
    }

    /// Inverse of `ℳ`: 1-based sorted index of a VMI.
    pub fn index_of(&self, id: VmiId) -> Option<usize> {
        self.ids.iter().position(|x| *x == id).map(|k| k + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn response_rate_examples() {
        assert_abs_diff_eq!(response_rate(0.1, 0.2, 0.1).unwrap(), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(response_rate(0.8, 1.0, 0.1).unwrap(), 1.0 / 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(response_rate(0.5, 0.25, 0.25).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn response_rate_rejects_nonpositive_delays() {
        assert!(response_rate(0.0, 0.2, 0.1).is_err());
        assert!(response_rate(0.1, -0.2, 0.1).is_err());
        assert!(response_rate(0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn sorts_two_nodes_by_rate() {
        let topo = FogTopology::new(
            vec![
                FogNode {
                    latency_ms: 0.2,
                    processing_ms: vec![0.2],
                },
                FogNode {
                    latency_ms: 0.1,
                    processing_ms: vec![0.2],
                },
            ],
            0.1,
        )
        .unwrap();
        let sorted = topo.sort_and_map();
        assert_abs_diff_eq!(sorted.rates()[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sorted.rates()[1], 2.0, epsilon = 1e-12);
        assert_eq!(sorted.vmi(1), Some(VmiId { node: 2, vmi: 1 }));
        assert_eq!(sorted.vmi(2), Some(VmiId { node: 1, vmi: 1 }));
    }

    #[test]
    fn equal_delays_keep_identity_order() {
        let topo = FogTopology::new(
            vec![
                FogNode {
                    latency_ms: 0.3,
                    processing_ms: vec![0.5, 0.5],
                },
                FogNode {
                    latency_ms: 0.3,
                    processing_ms: vec![0.5],
                },
            ],
            0.1,
        )
        .unwrap();
        let ids: Vec<VmiId> = topo.sort_and_map().ids().to_vec();
        assert_eq!(
            ids,
            vec![
                VmiId { node: 1, vmi: 1 },
                VmiId { node: 1, vmi: 2 },
                VmiId { node: 2, vmi: 1 }
            ]
        );
    }

    #[test]
    fn reference_setup_has_one_hundred_vmis() {
        let nodes: Vec<(f64, usize)> = [0.1, 0.2, 0.4, 0.6, 0.8].iter().map(|l| (*l, 20)).collect();
        let topo =
            FogTopology::sampled(&nodes, (0.2, 1.0), 0.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(topo.vmi_count(), 100);
        let sorted = topo.sort_and_map();
        assert_eq!(sorted.len(), 100);
        assert!(sorted.rates().windows(2).all(|w| w[0] >= w[1]));
        assert!(sorted.rates().iter().all(|r| *r >= 1.0 / 1.9 && *r <= 2.5));
    }

    #[test]
    fn invalid_topologies() {
        assert!(FogTopology::new(vec![], 0.1).is_err());
        assert!(FogTopology::new(
            vec![FogNode {
                latency_ms: 0.1,
                processing_ms: vec![]
            }],
            0.1
        )
        .is_err());
        assert!(FogTopology::sampled(&[(0.1, 2)], (1.0, 0.5), 0.1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn from_rates_keeps_exact_values() {
        let sorted = SortedRates::from_rates(&[1.0, 4.0, 2.5]).unwrap();
        assert_eq!(sorted.rates(), &[4.0, 2.5, 1.0]);
        assert_eq!(sorted.vmi(1), Some(VmiId { node: 2, vmi: 1 }));
        assert!(SortedRates::from_rates(&[1.0, 0.0]).is_err());
    }
}
