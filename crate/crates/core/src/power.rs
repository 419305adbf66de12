//! Memory and compute power.
//!
//! Memory tiers follow `P = p_bg·C + e_read·BW_read + e_write·BW_write`
//! with capacity in GB and bandwidth in bits/s. Compute power is a
//! parametric model: a static floor plus matrix and vector terms that scale
//! linearly with array size, vector width, clock and utilization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{MemoryTechnology, GB};
use crate::design::ComputeSpec;
use crate::hierarchy::HierarchySpec;

/// Relative slack allowed when comparing achieved against peak bandwidth.
const PEAK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("negative or non-finite power input: {0}")]
    NegativeInput(&'static str),
    #[error("requested bandwidth {requested:.4e} B/s exceeds tier peak {peak:.4e} B/s")]
    BandwidthExceedsPeak { requested: f64, peak: f64 },
    #[error("utilization {0} outside [0, 1]")]
    Utilization(f64),
    #[error("activity lists {got} tiers but the hierarchy has {expected}")]
    ActivityLength { expected: usize, got: usize },
}

/// Per-tier power coefficients in SI units (W/GB, J/bit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryPowerCoefficients {
    pub p_bg: f64,
    pub e_read: f64,
    pub e_write: f64,
}

impl From<&MemoryTechnology> for MemoryPowerCoefficients {
    fn from(t: &MemoryTechnology) -> Self {
        MemoryPowerCoefficients {
            p_bg: t.p_bg,
            e_read: t.e_read,
            e_write: t.e_write,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierPowerTerms {
    pub background: f64,
    pub read: f64,
    pub write: f64,
}

impl TierPowerTerms {
    pub fn total(&self) -> f64 {
        self.background + self.read + self.write
    }
}

/// Background, read and write terms for one tier. `peak_bandwidth` bounds
/// the combined read + write rate.
pub fn memory_tier_terms(
    capacity: f64,
    bw_read: f64,
    bw_write: f64,
    coeffs: &MemoryPowerCoefficients,
    peak_bandwidth: f64,
) -> Result<TierPowerTerms, PowerError> {
    for (name, v) in [
        ("capacity", capacity),
        ("bw_read", bw_read),
        ("bw_write", bw_write),
        ("p_bg", coeffs.p_bg),
        ("e_read", coeffs.e_read),
        ("e_write", coeffs.e_write),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(PowerError::NegativeInput(name));
        }
    }
    let requested = bw_read + bw_write;
    if requested > peak_bandwidth * (1.0 + PEAK_SLACK) {
        return Err(PowerError::BandwidthExceedsPeak {
            requested,
            peak: peak_bandwidth,
        });
    }
    Ok(TierPowerTerms {
        background: coeffs.p_bg * capacity / GB,
        read: coeffs.e_read * bw_read * 8.0,
        write: coeffs.e_write * bw_write * 8.0,
    })
}

/// Total tier power in watts.
pub fn memory_tier_power(
    capacity: f64,
    bw_read: f64,
    bw_write: f64,
    coeffs: &MemoryPowerCoefficients,
    peak_bandwidth: f64,
) -> Result<f64, PowerError> {
    memory_tier_terms(capacity, bw_read, bw_write, coeffs, peak_bandwidth).map(|t| t.total())
}

/// Reference geometry the compute coefficients are quoted against.
pub const PE_REF: f64 = 2048.0 * 128.0;
pub const VLEN_REF: f64 = 2048.0;

/// Parametric compute power. Defaults reproduce a 300.1 W system TDP for a
/// 2048x128 / VLEN 2048 array with SRAM2D x1 + HBM3E x4 at 1 GHz; 15% of
/// the compute peak is static and the dynamic remainder splits 4:1 between
/// the matrix and vector units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputePowerModel {
    pub p_static: f64,
    pub p_mac_peak: f64,
    pub p_vec_peak: f64,
    /// Clock the peak figures are quoted at.
    #[serde(alias = "clock")]
    pub clock_hz: f64,
}

impl Default for ComputePowerModel {
    fn default() -> Self {
        ComputePowerModel {
            p_static: 27.903,
            p_mac_peak: 126.4936,
            p_vec_peak: 31.6234,
            clock_hz: 1e9,
        }
    }
}

impl ComputePowerModel {
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("p_static", self.p_static),
            ("p_mac_peak", self.p_mac_peak),
            ("p_vec_peak", self.p_vec_peak),
            ("clock_hz", self.clock_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("compute_power.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

pub fn compute_power(
    compute: &ComputeSpec,
    matrix_utilization: f64,
    vector_utilization: f64,
    model: &ComputePowerModel,
) -> Result<f64, PowerError> {
    for u in [matrix_utilization, vector_utilization] {
        if !(0.0..=1.0).contains(&u) {
            return Err(PowerError::Utilization(u));
        }
    }
    let clock_ratio = compute.clock_hz / model.clock_hz;
    let mac = model.p_mac_peak * (compute.pe_count() as f64 / PE_REF) * clock_ratio;
    let vec = model.p_vec_peak * (f64::from(compute.vlen) / VLEN_REF) * clock_ratio;
    Ok(model.p_static + mac * matrix_utilization + vec * vector_utilization)
}

/// Achieved traffic of one tier, averaged over a stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TierActivity {
    pub read_bw: f64,
    pub write_bw: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub matrix_utilization: f64,
    pub vector_utilization: f64,
    pub tiers: Vec<TierActivity>,
}

impl Activity {
    pub fn idle(levels: usize) -> Self {
        Activity {
            matrix_utilization: 0.0,
            vector_utilization: 0.0,
            tiers: vec![TierActivity::default(); levels],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierPower {
    pub tier: String,
    pub background_w: f64,
    pub read_w: f64,
    pub write_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub avg_power: f64,
    pub tdp: f64,
    pub compute: f64,
    pub per_tier: Vec<TierPower>,
}

/// Compute plus every tier at full read bandwidth and full utilization.
pub fn tdp(
    compute: &ComputeSpec,
    hierarchy: &HierarchySpec,
    model: &ComputePowerModel,
) -> Result<f64, PowerError> {
    let mut total = compute_power(compute, 1.0, 1.0, model)?;
    for tier in &hierarchy.tiers {
        let peak = tier.aggregate_peak_bandwidth();
        total += memory_tier_power(
            tier.aggregate_capacity(),
            peak,
            0.0,
            &MemoryPowerCoefficients::from(&tier.tech),
            peak,
        )?;
    }
    Ok(total)
}

pub fn system_power(
    compute: &ComputeSpec,
    hierarchy: &HierarchySpec,
    model: &ComputePowerModel,
    activity: &Activity,
) -> Result<PowerReport, PowerError> {
    if activity.tiers.len() != hierarchy.len() {
        return Err(PowerError::ActivityLength {
            expected: hierarchy.len(),
            got: activity.tiers.len(),
        });
    }
    let compute_w = compute_power(
        compute,
        activity.matrix_utilization,
        activity.vector_utilization,
        model,
    )?;
    let mut avg = compute_w;
    let mut per_tier = Vec::with_capacity(hierarchy.len());
    for (tier, act) in hierarchy.tiers.iter().zip(&activity.tiers) {
        let terms = memory_tier_terms(
            tier.aggregate_capacity(),
            act.read_bw,
            act.write_bw,
            &MemoryPowerCoefficients::from(&tier.tech),
            tier.aggregate_peak_bandwidth(),
        )?;
        avg += terms.background + terms.read + terms.write;
        per_tier.push(TierPower {
            tier: tier.label(),
            background_w: terms.background,
            read_w: terms.read,
            write_w: terms.write,
        });
    }
    Ok(PowerReport {
        avg_power: avg,
        tdp: tdp(compute, hierarchy, model)?,
        compute: compute_w,
        per_tier,
    })
}

/// Inclusive TDP budget check.
pub fn check_tdp(report: &PowerReport, budget: f64) -> bool {
    report.tdp <= budget
}
