//! Frontier tables: the most energy-efficient designs under a TDP cap.

use std::cmp::Ordering;

use memexplorer_core::catalog::MemoryKind;
use serde::{Deserialize, Serialize};

use crate::pareto::ArchiveEntry;

/// One row of a frontier table. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub design_id: String,
    pub pe_array: String,
    pub vlen: u32,
    pub on_chip: String,
    pub off_chip: String,
    pub precision: String,
    pub storage_priority: String,
    pub dataflow: String,
    pub bw_priority: String,
    pub avg_power_w: f64,
    pub tdp_w: f64,
    pub batch: u64,
    pub throughput_tps: f64,
    pub tokens_per_j: f64,
}

pub const FRONTIER_COLUMNS: [&str; 14] = [
    "design_id",
    "pe_array",
    "vlen",
    "on_chip",
    "off_chip",
    "precision",
    "storage_priority",
    "dataflow",
    "bw_priority",
    "avg_power_w",
    "tdp_w",
    "batch",
    "throughput_tps",
    "tokens_per_j",
];

impl FrontierRow {
    pub fn from_entry(e: &ArchiveEntry) -> Self {
        let d = &e.design;
        let tiers = |kind: MemoryKind| {
            let labels: Vec<String> = d
                .hierarchy
                .tiers
                .iter()
                .filter(|t| t.tech.kind == kind)
                .map(|t| t.label())
                .collect();
            if labels.is_empty() {
                "-".to_string()
            } else {
                labels.join(" + ")
            }
        };
        FrontierRow {
            design_id: e.design_id.clone(),
            pe_array: format!("{}x{}", d.compute.pe_rows, d.compute.pe_cols),
            vlen: d.compute.vlen,
            on_chip: tiers(MemoryKind::OnChip),
            off_chip: tiers(MemoryKind::OffChip),
            precision: d.precision.to_string(),
            storage_priority: format!("{:?}", d.strategy.storage_priority),
            dataflow: format!("{:?}", d.strategy.dataflow),
            bw_priority: format!("{:?}", d.strategy.bw_priority),
            avg_power_w: e.eval.power_w,
            tdp_w: e.eval.tdp_w,
            batch: e.eval.batch,
            throughput_tps: e.eval.throughput_tps,
            tokens_per_j: e.eval.tokens_per_j,
        }
    }
}

/// Orders by tokens/J descending, then lower average power, then id.
fn efficiency_order(a: &ArchiveEntry, b: &ArchiveEntry) -> Ordering {
    b.eval
        .tokens_per_j
        .total_cmp(&a.eval.tokens_per_j)
        .then(a.eval.power_w.total_cmp(&b.eval.power_w))
        .then(a.design_id.cmp(&b.design_id))
}

/// The `k` designs with the best tokens/J among those whose TDP is within
/// `tdp_budget`, one row per distinct design.
pub fn pareto_report(entries: &[ArchiveEntry], k: usize, tdp_budget: f64) -> Vec<FrontierRow> {
    let mut eligible: Vec<&ArchiveEntry> = entries.iter().filter(|e| e.eval.tdp_w <= tdp_budget).collect();
    eligible.sort_by(|a, b| efficiency_order(a, b));
    eligible.dedup_by(|a, b| a.design_id == b.design_id);
    eligible.into_iter().take(k).map(FrontierRow::from_entry).collect()
}
