//! File-level workflows: catalogs, designs and workloads loaded from disk
//! and pushed through evaluation.

use std::path::PathBuf;

use approx::assert_relative_eq;
use memexplorer_core::catalog::TechnologyRecord;
use memexplorer_core::evaluator::eval_decode;
use memexplorer_core::{presets, Catalog, DesignFile, ShorelineBudget, WorkloadFile};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("memexplorer-core-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn catalog_json(catalog: &Catalog) -> String {
    serde_json::to_string_pretty(&catalog.to_records()).unwrap()
}

#[test]
fn catalog_survives_a_disk_round_trip() {
    let catalog = Catalog::bundled();
    let path = scratch("catalog").join("catalog.json");
    std::fs::write(&path, catalog_json(&catalog)).unwrap();
    let loaded = Catalog::load(&path).unwrap();
    assert_eq!(loaded.len(), catalog.len());
    for tech in catalog.iter() {
        let other = loaded.get(&tech.name).unwrap();
        assert_relative_eq!(other.latency, tech.latency, max_relative = 1e-12);
        assert_relative_eq!(other.capacity_per_unit, tech.capacity_per_unit, max_relative = 1e-12);
        assert_relative_eq!(other.bandwidth_per_unit, tech.bandwidth_per_unit, max_relative = 1e-12);
        assert_relative_eq!(other.p_bg, tech.p_bg, max_relative = 1e-12);
        assert_relative_eq!(other.e_read, tech.e_read, max_relative = 1e-12);
        assert_eq!(other.shoreline_per_unit, tech.shoreline_per_unit);
    }
}

#[test]
fn catalog_rejects_duplicates_and_missing_shoreline() {
    let mut records = Catalog::bundled().to_records();
    records.push(records[0].clone());
    assert!(Catalog::from_records(records).is_err());

    let mut records = Catalog::bundled().to_records();
    let off: &mut TechnologyRecord = records.iter_mut().find(|r| r.shoreline_per_unit.is_some()).unwrap();
    off.shoreline_per_unit = None;
    assert!(Catalog::from_records(records).is_err());

    assert!(Catalog::from_json_str("[{\"name\": \"X\"}]").is_err());
    assert!(Catalog::load("/nonexistent/catalog.json").is_err());
}

#[test]
fn overriding_read_energy_changes_decode_energy_only_through_memory() {
    let base = Catalog::bundled();
    let mut records = base.to_records();
    for r in &mut records {
        r.e_read *= 2.0;
    }
    let doubled = Catalog::from_records(records).unwrap();
    let file = presets::design("d2");
    let workload = presets::workload("bfcl_wsb").workload();
    let a = eval_decode(&file.resolve(&base, None).unwrap(), &workload).unwrap();
    let b = eval_decode(&file.resolve(&doubled, None).unwrap(), &workload).unwrap();
    // Timing does not depend on energy coefficients.
    assert_eq!(a.latency_s, b.latency_s);
    assert_eq!(a.batch, b.batch);
    assert_eq!(a.power.compute, b.power.compute);
    for (x, y) in a.power.per_tier.iter().zip(&b.power.per_tier) {
        assert_eq!(x.background_w, y.background_w);
        assert_relative_eq!(y.read_w, 2.0 * x.read_w, max_relative = 1e-12);
        assert_eq!(x.write_w, y.write_w);
    }
    assert!(b.energy_per_token > a.energy_per_token);
}

#[test]
fn every_bundled_design_round_trips_through_json() {
    let catalog = Catalog::bundled();
    let dir = scratch("designs");
    for name in presets::design_names() {
        let file = presets::design(name);
        let point = file.resolve(&catalog, None).unwrap();
        // D2 and P2 populate more edge than the die has; they are kept as
        // reference points and reported, not rejected, on load.
        let report = point.feasibility(&catalog, &ShorelineBudget::default());
        assert_eq!(report.feasible, !matches!(name, "d2" | "p2"), "{name}: {}", report.summary());
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&point.to_file()).unwrap()).unwrap();
        let again = DesignFile::load(&path).unwrap().resolve(&catalog, None).unwrap();
        assert_eq!(again, point);
    }
}

#[test]
fn design_files_are_strict() {
    let catalog = Catalog::bundled();
    let strategy = r#""strategy": {"dataflow": "WS", "storage_priority": "Equal", "bw_priority": "Equal"}"#;
    let unknown_field = r#"{"compute": {"pe_rows": 128, "pe_cols": 128, "vlen": 128},
        "hierarchy": [{"tech": "HBM4", "units": 1}], "colour": "red", STRATEGY}"#;
    assert!(DesignFile::from_json_str(&unknown_field.replace("STRATEGY", strategy)).is_err());
    let no_strategy = r#"{"compute": {"pe_rows": 128, "pe_cols": 128, "vlen": 128},
        "hierarchy": [{"tech": "HBM4", "units": 1}]}"#;
    assert!(DesignFile::from_json_str(no_strategy).is_err());
    let unknown_tech = r#"{"compute": {"pe_rows": 128, "pe_cols": 128, "vlen": 128},
        "hierarchy": [{"tech": "CORE_ROPE", "units": 1}], STRATEGY}"#;
    let file = DesignFile::from_json_str(&unknown_tech.replace("STRATEGY", strategy)).unwrap();
    assert!(file.resolve(&catalog, None).is_err());
    let bad_bits = r#"{"compute": {"pe_rows": 128, "pe_cols": 128, "vlen": 128},
        "hierarchy": [{"tech": "HBM4", "units": 1}], "precision": {"w": 3, "a": 8, "kv": 8}, STRATEGY}"#;
    let rejected = DesignFile::from_json_str(&bad_bits.replace("STRATEGY", strategy)).map_or(true, |f| f.resolve(&catalog, None).is_err());
    assert!(rejected);
}

#[test]
fn every_bundled_workload_round_trips_through_json() {
    let dir = scratch("workloads");
    for name in presets::workload_names() {
        let file = presets::workload(name);
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(WorkloadFile::load(&path).unwrap(), file);
    }
    assert!(WorkloadFile::from_json_str("{}").is_err());
    assert!(WorkloadFile::load("/nonexistent/workload.json").is_err());
}
