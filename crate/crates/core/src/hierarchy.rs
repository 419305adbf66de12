//! Multi-level hierarchy construction and the double-buffered transfer model.
//!
//! Tiers are indexed outward from compute: tier 0 in the `tiers` vector is
//! level 1 (closest to the compute unit), the last entry is level L. Boundary
//! `i` connects level `i` to level `i - 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{MemoryKind, MemoryTechnology};

/// Tolerance on the placement-fraction sum.
pub const PLACEMENT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HierarchyError {
    #[error("hierarchy must contain at least one tier")]
    Empty,
    #[error("tier `{0}` must have at least one unit")]
    ZeroUnits(String),
    #[error(
        "infeasible bandwidth at boundary {boundary}: effective bandwidth {effective:.3e} B/s \
         is not positive (deeper levels saturate this link)"
    )]
    InfeasibleBandwidth { boundary: usize, effective: f64 },
    #[error("placement has {got} entries but the hierarchy has {expected} tiers")]
    PlacementLength { expected: usize, got: usize },
    #[error("placement fraction {value} at tier {tier} is outside [0, 1]")]
    PlacementRange { tier: usize, value: f64 },
    #[error("placement fractions sum to {0}, expected 1")]
    PlacementSum(f64),
    #[error("transfer size must be finite and non-negative, got {0}")]
    NegativeBytes(f64),
}

/// One tier of a hierarchy: a technology and how many units are installed.
#[derive(Debug, Clone, PartialEq)]
pub struct TierInstance {
    pub tech: MemoryTechnology,
    pub units: u32,
}

impl TierInstance {
    pub fn new(tech: MemoryTechnology, units: u32) -> Result<Self, HierarchyError> {
        if units == 0 {
            return Err(HierarchyError::ZeroUnits(tech.name));
        }
        Ok(TierInstance { tech, units })
    }

    pub fn aggregate_capacity(&self) -> f64 {
        f64::from(self.units) * self.tech.capacity_per_unit
    }

    pub fn aggregate_peak_bandwidth(&self) -> f64 {
        f64::from(self.units) * self.tech.bandwidth_per_unit
    }

    pub fn is_on_chip(&self) -> bool {
        self.tech.kind == MemoryKind::OnChip
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.tech.name, self.units)
    }
}

/// Ordered tiers, closest to compute first.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySpec {
    pub tiers: Vec<TierInstance>,
}

impl HierarchySpec {
    pub fn new(tiers: Vec<TierInstance>) -> Result<Self, HierarchyError> {
        if tiers.is_empty() {
            return Err(HierarchyError::Empty);
        }
        Ok(HierarchySpec { tiers })
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.tiers.iter().map(|t| t.tech.latency).collect()
    }

    pub fn peak_bandwidths(&self) -> Vec<f64> {
        self.tiers.iter().map(TierInstance::aggregate_peak_bandwidth).collect()
    }

    pub fn total_capacity(&self) -> f64 {
        self.tiers.iter().map(TierInstance::aggregate_capacity).sum()
    }

    pub fn on_chip_capacity(&self) -> f64 {
        self.tiers
            .iter()
            .filter(|t| t.is_on_chip())
            .map(TierInstance::aggregate_capacity)
            .sum()
    }

    /// Number of leading on-chip tiers.
    pub fn on_chip_count(&self) -> usize {
        self.tiers.iter().take_while(|t| t.is_on_chip()).count()
    }

    pub fn describe(&self) -> String {
        self.tiers
            .iter()
            .map(TierInstance::label)
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// A bulk transfer of `total_bytes` whose data is spread over the tiers
/// according to `placement` (fraction of the total resident at each tier).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRequest {
    pub total_bytes: f64,
    pub placement: Vec<f64>,
}

impl TransferRequest {
    pub fn new(total_bytes: f64, placement: Vec<f64>) -> Result<Self, HierarchyError> {
        let req = TransferRequest {
            total_bytes,
            placement,
        };
        req.check()?;
        Ok(req)
    }

    /// Everything resident at a single tier.
    pub fn at_tier(total_bytes: f64, tier: usize, levels: usize) -> Result<Self, HierarchyError> {
        let mut placement = vec![0.0; levels];
        if tier >= levels {
            return Err(HierarchyError::PlacementLength {
                expected: levels,
                got: tier + 1,
            });
        }
        placement[tier] = 1.0;
        Self::new(total_bytes, placement)
    }

    fn check(&self) -> Result<(), HierarchyError> {
        if !(self.total_bytes.is_finite() && self.total_bytes >= 0.0) {
            return Err(HierarchyError::NegativeBytes(self.total_bytes));
        }
        for (idx, &a) in self.placement.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(HierarchyError::PlacementRange {
                    tier: idx + 1,
                    value: a,
                });
            }
        }
        let sum: f64 = self.placement.iter().sum();
        if (sum - 1.0).abs() > PLACEMENT_SUM_TOL {
            return Err(HierarchyError::PlacementSum(sum));
        }
        Ok(())
    }

    fn check_against(&self, levels: usize) -> Result<(), HierarchyError> {
        self.check()?;
        if self.placement.len() != levels {
            return Err(HierarchyError::PlacementLength {
                expected: levels,
                got: self.placement.len(),
            });
        }
        Ok(())
    }

    /// Bytes that must cross each boundary: `x_i` = total × Σ_{j ≥ i} α_j.
    pub fn boundary_bytes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.placement.len()];
        let mut tail = 0.0;
        for (i, a) in self.placement.iter().enumerate().rev() {
            tail += a;
            out[i] = self.total_bytes * tail.min(1.0);
        }
        out
    }
}

/// Effective bandwidth per boundary from raw peaks, seeded at the deepest
/// boundary and subtracted inward.
pub fn effective_bandwidths_from_peaks(peaks: &[f64]) -> Result<Vec<f64>, HierarchyError> {
    if peaks.is_empty() {
        return Err(HierarchyError::Empty);
    }
    let mut eff = vec![0.0; peaks.len()];
    let mut deeper = 0.0;
    for i in (0..peaks.len()).rev() {
        let b = peaks[i] - deeper;
        if !(b > 0.0) {
            return Err(HierarchyError::InfeasibleBandwidth {
                boundary: i + 1,
                effective: b,
            });
        }
        eff[i] = b;
        deeper = b;
    }
    Ok(eff)
}

pub fn effective_bandwidths(spec: &HierarchySpec) -> Result<Vec<f64>, HierarchyError> {
    effective_bandwidths_from_peaks(&spec.peak_bandwidths())
}

/// Latency of one boundary for an `alpha` share of `x` bytes:
/// τ = λ + α·x / B_eff. `boundary` is zero-based (0 is level 1).
pub fn boundary_time(
    x: f64,
    alpha: f64,
    boundary: usize,
    spec: &HierarchySpec,
) -> Result<f64, HierarchyError> {
    let eff = effective_bandwidths(spec)?;
    let b = *eff.get(boundary).ok_or(HierarchyError::PlacementLength {
        expected: spec.len(),
        got: boundary + 1,
    })?;
    Ok(spec.tiers[boundary].tech.latency + alpha * x / b)
}

/// Double-buffered hierarchical transfer time.
pub fn total_transfer_time(req: &TransferRequest, spec: &HierarchySpec) -> Result<f64, HierarchyError> {
    let eff = effective_bandwidths(spec)?;
    total_transfer_time_with(req, &spec.latencies(), &eff)
}

/// Same recursion with caller-supplied latencies and (possibly scaled)
/// effective bandwidths, e.g. one stream's share of each boundary.
pub fn total_transfer_time_with(
    req: &TransferRequest,
    latencies: &[f64],
    eff_bandwidths: &[f64],
) -> Result<f64, HierarchyError> {
    req.check_against(latencies.len())?;
    if eff_bandwidths.len() != latencies.len() {
        return Err(HierarchyError::PlacementLength {
            expected: latencies.len(),
            got: eff_bandwidths.len(),
        });
    }
    if let Some((i, &b)) = eff_bandwidths.iter().enumerate().find(|(_, b)| !(**b > 0.0)) {
        return Err(HierarchyError::InfeasibleBandwidth {
            boundary: i + 1,
            effective: b,
        });
    }
    let x = req.boundary_bytes();
    Ok(recurse(0, &x, latencies, eff_bandwidths))
}

fn recurse(i: usize, x: &[f64], lat: &[f64], eff: &[f64]) -> f64 {
    let tau_cur = lat[i] + x[i] / eff[i];
    if i + 1 == x.len() {
        return tau_cur;
    }
    let t_deep = recurse(i + 1, x, lat, eff);
    if t_deep <= tau_cur {
        // Deeper supply completes under the cover of this boundary.
        tau_cur
    } else {
        // This boundary stalls on deeper levels.
        t_deep
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, MemoryKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const GIB: f64 = 1_073_741_824.0;

    fn synthetic(latency: f64, bw: f64, on_chip: bool) -> TierInstance {
        TierInstance::new(
            MemoryTechnology {
                name: "T".into(),
                kind: if on_chip { MemoryKind::OnChip } else { MemoryKind::OffChip },
                latency,
                capacity_per_unit: 1e9,
                bandwidth_per_unit: bw,
                shoreline_per_unit: if on_chip { None } else { Some(1.0) },
                p_bg: 1.0,
                e_read: 1e-12,
                e_write: 1e-12,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn effective_bandwidth_examples() {
        assert_eq!(effective_bandwidths_from_peaks(&[4e12]).unwrap(), vec![4e12]);
        assert_eq!(effective_bandwidths_from_peaks(&[4e12, 1e12]).unwrap(), vec![3e12, 1e12]);
        assert_eq!(
            effective_bandwidths_from_peaks(&[1e12, 1e12]),
            Err(HierarchyError::InfeasibleBandwidth {
                boundary: 1,
                effective: 0.0
            })
        );
    }

    #[test]
    fn aggregates_are_exact() {
        let catalog = Catalog::bundled();
        let t = TierInstance::new(catalog.get("HBM4").unwrap().clone(), 2).unwrap();
        assert_eq!(t.aggregate_capacity(), 72e9);
        assert_eq!(t.aggregate_peak_bandwidth(), 4e12);
        assert!(TierInstance::new(catalog.get("HBM4").unwrap().clone(), 0).is_err());
    }

    #[test]
    fn boundary_time_examples() {
        let spec = HierarchySpec::new(vec![synthetic(100e-9, 1e12, false)]).unwrap();
        assert_eq!(boundary_time(0.0, 0.7, 0, &spec).unwrap(), 100e-9);
        assert_eq!(boundary_time(5e9, 0.0, 0, &spec).unwrap(), 100e-9);
        let t = boundary_time(GIB, 1.0, 0, &spec).unwrap();
        assert_relative_eq!(t, 100e-9 + GIB / 1e12, max_relative = 1e-15);
        assert_relative_eq!(t, 1.0738e-3, max_relative = 1e-4);
    }

    fn two_tier() -> HierarchySpec {
        // Peaks 4 TB/s and 1 TB/s give effective 3 TB/s and 1 TB/s.
        HierarchySpec::new(vec![synthetic(1e-9, 4e12, true), synthetic(100e-9, 1e12, false)]).unwrap()
    }

    #[test]
    fn case_one_fully_overlapped() {
        let req = TransferRequest::new(GIB, vec![1.0, 0.0]).unwrap();
        let t = total_transfer_time(&req, &two_tier()).unwrap();
        assert_relative_eq!(t, 1e-9 + GIB / 3e12, max_relative = 1e-15);
        assert_relative_eq!(t, 0.358e-3, max_relative = 1e-3);
    }

    #[test]
    fn case_two_bandwidth_limited() {
        let req = TransferRequest::new(GIB, vec![0.0, 1.0]).unwrap();
        let t = total_transfer_time(&req, &two_tier()).unwrap();
        assert_relative_eq!(t, 100e-9 + GIB / 1e12, max_relative = 1e-15);
    }

    #[test]
    fn single_tier_reduces_to_boundary_time() {
        let spec = HierarchySpec::new(vec![synthetic(50e-9, 2e12, false)]).unwrap();
        let req = TransferRequest::new(3e9, vec![1.0]).unwrap();
        assert_eq!(
            total_transfer_time(&req, &spec).unwrap(),
            boundary_time(3e9, 1.0, 0, &spec).unwrap()
        );
    }

    #[test]
    fn tie_between_cases_is_continuous() {
        // τ_cur = 1 + 1/4 and T_deep = 0 + 1/0.8 are both exactly 1.25.
        let req = TransferRequest::new(1.0, vec![0.0, 1.0]).unwrap();
        let t = total_transfer_time_with(&req, &[1.0, 0.0], &[4.0, 0.8]).unwrap();
        assert_eq!(t, 1.25);
    }

    #[test]
    fn placement_validation() {
        assert!(matches!(
            TransferRequest::new(1.0, vec![0.5, 0.4]),
            Err(HierarchyError::PlacementSum(_))
        ));
        assert!(matches!(
            TransferRequest::new(1.0, vec![1.2, -0.2]),
            Err(HierarchyError::PlacementRange { .. })
        ));
        let req = TransferRequest::new(1.0, vec![1.0]).unwrap();
        assert!(matches!(
            total_transfer_time(&req, &two_tier()),
            Err(HierarchyError::PlacementLength { .. })
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>, f64)> {
        (1usize..=4)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec((1e-9..2e-6f64, 0.1e12..2e12f64), n),
                    prop::collection::vec(0.0..1.0f64, n),
                    1e3..1e10f64,
                )
            })
            .prop_map(|(tiers, raw, x)| {
                let sum: f64 = raw.iter().sum::<f64>().max(1e-12);
                let mut alpha: Vec<f64> = raw.iter().map(|a| a / sum).collect();
                if raw.iter().sum::<f64>() < 1e-12 {
                    alpha = vec![0.0; raw.len()];
                    alpha[0] = 1.0;
                }
                (tiers, alpha, x)
            })
    }

    proptest! {
        #[test]
        fn monotone_in_payload((tiers, alpha, x) in arb_case(), factor in 1.0..10.0f64) {
            let lat: Vec<f64> = tiers.iter().map(|t| t.0).collect();
            let eff: Vec<f64> = tiers.iter().map(|t| t.1).collect();
            let small = TransferRequest::new(x, alpha.clone()).unwrap();
            let big = TransferRequest::new(x * factor, alpha).unwrap();
            let a = total_transfer_time_with(&small, &lat, &eff).unwrap();
            let b = total_transfer_time_with(&big, &lat, &eff).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn moving_data_inward_never_slower(
            (tiers, alpha, x) in arb_case(),
            from_sel in 0usize..4,
            to_sel in 0usize..4,
            share in 0.0..1.0f64,
        ) {
            let n = alpha.len();
            let (to, from) = (to_sel % n, from_sel % n);
            prop_assume!(to < from);
            let lat: Vec<f64> = tiers.iter().map(|t| t.0).collect();
            let eff: Vec<f64> = tiers.iter().map(|t| t.1).collect();
            let mut moved = alpha.clone();
            let delta = moved[from] * share;
            moved[from] -= delta;
            moved[to] += delta;
            let before = total_transfer_time_with(&TransferRequest::new(x, alpha).unwrap(), &lat, &eff).unwrap();
            let after = total_transfer_time_with(&TransferRequest::new(x, moved).unwrap(), &lat, &eff).unwrap();
            prop_assert!(after <= before * (1.0 + 1e-12));
        }

        #[test]
        fn result_bounded_below_by_every_boundary((tiers, alpha, x) in arb_case()) {
            let lat: Vec<f64> = tiers.iter().map(|t| t.0).collect();
            let eff: Vec<f64> = tiers.iter().map(|t| t.1).collect();
            let req = TransferRequest::new(x, alpha.clone()).unwrap();
            let t = total_transfer_time_with(&req, &lat, &eff).unwrap();
            prop_assert!(t.is_finite());
            for i in 0..alpha.len() {
                prop_assert!(t >= lat[i] + alpha[i] * x / eff[i] - 1e-15);
            }
        }
    }
}
