//! `catalog list` and `catalog validate`.

use std::path::Path;

use memexplorer_core::catalog::{max_stacks, MemoryKind, ShorelineBudget};
use memexplorer_core::Catalog;

use crate::failure::{Failure, Kind, Tag};
use crate::inputs::load_catalog;

/// Up to four decimals, without trailing zeros.
fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn list() -> Result<(), Failure> {
    let (catalog, record) = load_catalog()?;
    println!("catalog: {} ({} technologies)", record.source, catalog.len());
    println!(
        "{:<8} {:<7} {:>9} {:>10} {:>9} {:>11} {:>9} {:>8} {:>8} {:>10}",
        "name", "kind", "lat_ns", "cap_GB", "bw_GB/s", "shore_mm", "pbg_mW/GB", "rd_pJ/b", "wr_pJ/b", "max_units"
    );
    let budget = ShorelineBudget::default();
    for (rec, tech) in catalog.to_records().iter().zip(catalog.iter()) {
        let kind = match rec.kind {
            MemoryKind::OnChip => "on",
            MemoryKind::OffChip => "off",
        };
        let shoreline = rec.shoreline_per_unit.map_or("-".to_string(), num);
        let max_units = max_stacks(tech, &budget).map_or("-".to_string(), |n| n.to_string());
        println!(
            "{:<8} {:<7} {:>9} {:>10} {:>9} {:>11} {:>9} {:>8} {:>8} {:>10}",
            rec.name,
            kind,
            num(rec.latency),
            num(rec.capacity_per_unit),
            num(rec.bandwidth_per_unit),
            shoreline,
            num(rec.p_bg),
            num(rec.e_read),
            num(rec.e_write),
            max_units
        );
    }
    Ok(())
}

pub fn validate(file: &Path) -> Result<(), Failure> {
    let catalog = Catalog::load(file).tag(Kind::Invalid)?;
    println!("{}: ok, {} technologies", file.display(), catalog.len());
    Ok(())
}
