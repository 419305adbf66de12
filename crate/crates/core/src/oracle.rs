//! Chunked discrete-event simulator of hierarchical transfers.
//!
//! Each boundary is a FIFO server with rate `B_eff` that opens after its
//! fixed latency. Data resident at level `i` is queued at boundary `i` from
//! time zero; data from deeper levels joins the queue chunk by chunk as it
//! arrives (store-and-forward). The simulation shares no code with the
//! analytic recursion other than the effective-bandwidth computation, so it
//! serves as an independent check of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{validate_hierarchy, Catalog, Mode, ShorelineBudget};
use crate::hierarchy::{
    effective_bandwidths, total_transfer_time, HierarchyError, HierarchySpec, TierInstance,
    TransferRequest,
};

pub const DEFAULT_CHUNK_BYTES: f64 = 1_048_576.0;

/// Smallest and largest payload drawn by the randomized validation.
pub const MIN_CASE_BYTES: f64 = 1e6;
pub const MAX_CASE_BYTES: f64 = 10e9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("chunk size must be positive, got {0}")]
    ChunkSize(f64),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("at least one validation case is required")]
    NoCases,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub chunk_bytes: f64,
    pub hierarchy: HierarchySpec,
    pub placement: TransferRequest,
}

impl OracleConfig {
    pub fn new(hierarchy: HierarchySpec, placement: TransferRequest) -> Self {
        OracleConfig {
            chunk_bytes: DEFAULT_CHUNK_BYTES,
            hierarchy,
            placement,
        }
    }
}

fn split_into_chunks(bytes: f64, chunk: f64) -> Vec<f64> {
    if bytes <= 0.0 {
        return Vec::new();
    }
    let full = (bytes / chunk).floor() as usize;
    let mut out = vec![chunk; full];
    let rest = bytes - full as f64 * chunk;
    if rest > chunk * 1e-12 {
        out.push(rest);
    }
    out
}

/// Completion time of the last chunk at level 0.
pub fn simulate_transfer(cfg: &OracleConfig) -> Result<f64, OracleError> {
    if !(cfg.chunk_bytes > 0.0 && cfg.chunk_bytes.is_finite()) {
        return Err(OracleError::ChunkSize(cfg.chunk_bytes));
    }
    let spec = &cfg.hierarchy;
    let eff = effective_bandwidths(spec)?;
    let levels = spec.len();
    if cfg.placement.placement.len() != levels {
        return Err(HierarchyError::PlacementLength {
            expected: levels,
            got: cfg.placement.placement.len(),
        }
        .into());
    }

    // (available_time, bytes) of chunks arriving from below, sorted by time.
    let mut arrivals: Vec<(f64, f64)> = Vec::new();
    let mut latency_floor: f64 = 0.0;
    for level in (0..levels).rev() {
        let latency = spec.tiers[level].tech.latency;
        latency_floor = latency_floor.max(latency);
        let resident = split_into_chunks(
            cfg.placement.placement[level] * cfg.placement.total_bytes,
            cfg.chunk_bytes,
        );
        // Resident chunks are ready at t = 0 and precede any arrival.
        let queue = resident.into_iter().map(|b| (0.0, b)).chain(arrivals.drain(..));
        let mut free_at = latency;
        let mut departed = Vec::new();
        for (ready, bytes) in queue {
            let start = free_at.max(ready);
            free_at = start + bytes / eff[level];
            departed.push((free_at, bytes));
        }
        arrivals = departed;
    }
    Ok(arrivals
        .last()
        .map(|&(t, _)| t)
        .unwrap_or(latency_floor)
        .max(latency_floor))
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCase {
    pub index: usize,
    pub hierarchy: String,
    pub total_bytes: f64,
    pub placement: Vec<f64>,
    pub analytic_s: f64,
    pub oracle_s: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub n_cases: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub chunk_bytes: f64,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub cases: Vec<OracleCase>,
    pub failures: Vec<OracleCase>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn sample_hierarchy(rng: &mut ChaCha8Rng, catalog: &Catalog) -> HierarchySpec {
    let techs: Vec<_> = catalog.iter().collect();
    let on_chip: Vec<_> = techs.iter().filter(|t| t.is_on_chip()).collect();
    let off_chip: Vec<_> = techs.iter().filter(|t| !t.is_on_chip()).collect();
    let budget = ShorelineBudget::default();
    loop {
        let levels = rng.gen_range(1..=4usize);
        let n_on = if rng.gen_bool(0.5) { rng.gen_range(0..=levels.min(2)) } else { 0 };
        let mut tiers = Vec::with_capacity(levels);
        for _ in 0..n_on {
            let tech = on_chip[rng.gen_range(0..on_chip.len())];
            let units = *pick(rng, tech.allowed_units());
            tiers.push(TierInstance::new((**tech).clone(), units).expect("positive units"));
        }
        for _ in n_on..levels {
            let tech = off_chip[rng.gen_range(0..off_chip.len())];
            let units = *pick(rng, tech.allowed_units());
            tiers.push(TierInstance::new((**tech).clone(), units).expect("positive units"));
        }
        let spec = HierarchySpec::new(tiers).expect("non-empty");
        let shape_ok = validate_hierarchy(&spec, catalog, &budget, Mode::Unconstrained).feasible;
        if shape_ok && effective_bandwidths(&spec).is_ok() {
            return spec;
        }
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

/// Uniform draw from the probability simplex (normalized exponentials).
fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|r| r / sum).collect();
    // Absorb rounding in the last entry so the sum is 1 to machine precision.
    let head: f64 = out[..n - 1].iter().sum();
    out[n - 1] = (1.0 - head).max(0.0);
    out
}

/// Compares the analytic recursion against the simulator on seeded random
/// hierarchies and placements.
pub fn validate_against_analytic(
    n_cases: usize,
    seed: u64,
    tolerance: f64,
    chunk_bytes: f64,
    catalog: &Catalog,
) -> Result<OracleReport, OracleError> {
    if n_cases == 0 {
        return Err(OracleError::NoCases);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(n_cases);
    for index in 0..n_cases {
        let spec = sample_hierarchy(&mut rng, catalog);
        let alpha = simplex(&mut rng, spec.len());
        let x = rng.gen_range(MIN_CASE_BYTES..=MAX_CASE_BYTES);
        let req = TransferRequest::new(x, alpha.clone())?;
        let analytic = total_transfer_time(&req, &spec)?;
        let oracle = simulate_transfer(&OracleConfig {
            chunk_bytes,
            hierarchy: spec.clone(),
            placement: req,
        })?;
        let rel_err = (oracle - analytic).abs() / analytic;
        cases.push(OracleCase {
            index,
            hierarchy: spec.describe(),
            total_bytes: x,
            placement: alpha,
            analytic_s: analytic,
            oracle_s: oracle,
            rel_err,
        });
    }
    let max_rel_err = cases.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    let mean_rel_err = cases.iter().map(|c| c.rel_err).sum::<f64>() / n_cases as f64;
    let failures = cases.iter().filter(|c| c.rel_err > tolerance).cloned().collect();
    Ok(OracleReport {
        n_cases,
        seed,
        tolerance,
        chunk_bytes,
        max_rel_err,
        mean_rel_err,
        cases,
        failures,
    })
}
