//! `report`: rebuilds the frontier and the Pareto point table from a run
//! directory written by `explore`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use memexplorer_core::Catalog;
use memexplorer_dse::report::FRONTIER_COLUMNS;
use memexplorer_dse::{dominates, pareto_report, ArchiveEntry, Config, Evaluation, FrontierRow, Method, Stage};
use serde::{Deserialize, Serialize};

use crate::explore::{csv_text, write_text, Manifest};
use crate::failure::{Failure, Kind, Tag};
use crate::inputs::{load_catalog, load_design, read_text, require_dir};
use crate::ReportArgs;

/// One row of `evaluations.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub method: Method,
    pub seed: u64,
    pub design_id: String,
    /// Gene indices separated by spaces.
    pub config: String,
    pub throughput_tps: f64,
    pub power_w: f64,
    pub tdp_w: f64,
    pub tokens_per_j: f64,
    pub batch: u64,
    pub latency_s: f64,
}

impl EvaluationRecord {
    pub const COLUMNS: [&'static str; 10] = [
        "method",
        "seed",
        "design_id",
        "config",
        "throughput_tps",
        "power_w",
        "tdp_w",
        "tokens_per_j",
        "batch",
        "latency_s",
    ];

    pub fn new(method: Method, seed: u64, e: &ArchiveEntry) -> Self {
        let config: Vec<String> = e.config.0.iter().map(ToString::to_string).collect();
        EvaluationRecord {
            method,
            seed,
            design_id: e.design_id.clone(),
            config: config.join(" "),
            throughput_tps: e.eval.throughput_tps,
            power_w: e.eval.power_w,
            tdp_w: e.eval.tdp_w,
            tokens_per_j: e.eval.tokens_per_j,
            batch: e.eval.batch,
            latency_s: e.eval.latency_s,
        }
    }

    fn parse_config(&self) -> Result<Config, Failure> {
        self.config
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(Config)
            .tag_with(Kind::Invalid, || format!("bad config `{}` for {}", self.config, self.design_id))
    }

    fn evaluation(&self) -> Evaluation {
        Evaluation {
            throughput_tps: self.throughput_tps,
            power_w: self.power_w,
            tdp_w: self.tdp_w,
            tokens_per_j: self.tokens_per_j,
            batch: self.batch,
            latency_s: self.latency_s,
        }
    }
}

/// One row of `pareto_points.csv`: every distinct design, whether it meets
/// the power budget, and whether it is on the throughput/power front of
/// the designs that do.
#[derive(Debug, Serialize)]
struct PointRow<'a> {
    design_id: &'a str,
    throughput_tps: f64,
    power_w: f64,
    tokens_per_j: f64,
    tdp_w: f64,
    feasible: bool,
    pareto: bool,
}

const POINT_COLUMNS: [&str; 7] = [
    "design_id",
    "throughput_tps",
    "power_w",
    "tokens_per_j",
    "tdp_w",
    "feasible",
    "pareto",
];

/// The `top` most energy-efficient distinct designs with TDP within
/// `tdp_budget`.
pub fn frontier_rows(entries: &[ArchiveEntry], tdp_budget: f64, top: usize) -> Vec<FrontierRow> {
    pareto_report(entries, top, tdp_budget)
}

/// Expected shape of the most energy-efficient design: prefill favours
/// stacked SRAM, decode favours a high-capacity tier. Returns a warning
/// when `best` departs from it, as it can under a custom catalog.
pub fn structure_warning(stage: Stage, best: &FrontierRow) -> Option<String> {
    let (expected, ok) = match stage {
        Stage::Prefill => ("at least one 3D-SRAM layer", best.on_chip.contains("SRAM3D")),
        Stage::Decode => (
            "a capacity tier (HBF or LPDDR)",
            best.off_chip.contains("HBF") || best.off_chip.contains("LPDDR"),
        ),
    };
    (!ok).then(|| {
        format!(
            "the most energy-efficient {stage} design {} ({} | {}) does not include {expected}",
            best.design_id, best.on_chip, best.off_chip
        )
    })
}

pub fn write_frontier(dir: &Path, rows: &[FrontierRow], hashes: &mut BTreeMap<String, String>) -> Result<(), Failure> {
    write_text(dir, "frontier.csv", &csv_text(rows, &FRONTIER_COLUMNS)?, hashes)
}

fn points_csv(entries: &[ArchiveEntry], tdp_budget: f64) -> Result<String, Failure> {
    let mut seen = HashSet::new();
    let distinct: Vec<&ArchiveEntry> = entries.iter().filter(|e| seen.insert(e.design_id.as_str())).collect();
    let feasible: Vec<&ArchiveEntry> = distinct.iter().copied().filter(|e| e.eval.tdp_w <= tdp_budget).collect();
    let rows = distinct.iter().map(|e| {
        let ok = e.eval.tdp_w <= tdp_budget;
        let pareto = ok && !feasible.iter().any(|o| dominates(&o.objectives(), &e.objectives()));
        PointRow {
            design_id: &e.design_id,
            throughput_tps: e.eval.throughput_tps,
            power_w: e.eval.power_w,
            tokens_per_j: e.eval.tokens_per_j,
            tdp_w: e.eval.tdp_w,
            feasible: ok,
            pareto,
        }
    });
    csv_text(rows, &POINT_COLUMNS)
}

/// Reads `evaluations.csv` and the design files it points to.
pub fn load_entries(run: &Path, catalog: &Catalog, method: Option<&[Method]>) -> Result<Vec<ArchiveEntry>, Failure> {
    let (text, _) = read_text(&run.join("evaluations.csv"))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut designs = HashMap::new();
    let mut entries = Vec::new();
    for (i, record) in reader.deserialize::<EvaluationRecord>().enumerate() {
        let record = record.tag_with(Kind::Invalid, || format!("evaluations.csv row {}", i + 1))?;
        if method.is_some_and(|m| !m.contains(&record.method)) {
            continue;
        }
        if !designs.contains_key(&record.design_id) {
            let path = run.join("designs").join(format!("{}.json", record.design_id));
            let (file, _) = load_design(&path)?;
            let design = file
                .resolve(catalog, None)
                .tag_with(Kind::Invalid, || path.display().to_string())?;
            designs.insert(record.design_id.clone(), design);
        }
        let entry = ArchiveEntry::new(record.parse_config()?, designs[&record.design_id].clone(), record.evaluation());
        if entry.design_id != record.design_id {
            return Err(Failure::msg(
                Kind::Invalid,
                format!(
                    "design file for {} hashes to {}; it was edited or the catalog differs",
                    record.design_id, entry.design_id
                ),
            ));
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn run(args: &ReportArgs) -> Result<(), Failure> {
    let (text, _) = read_text(&args.run.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&text).tag_with(Kind::Invalid, || "manifest.json")?;
    let (catalog, catalog_record) = load_catalog()?;
    if manifest.inputs.get("catalog").is_some_and(|c| c.sha256 != catalog_record.sha256) {
        eprintln!("warning: the active catalog differs from the one this run used");
    }
    let tdp_budget = args.tdp.unwrap_or(manifest.tdp_w);
    if !(tdp_budget > 0.0) {
        return Err(crate::inputs::invalid(format!("--tdp must be positive, got {tdp_budget}")));
    }
    let methods = args.method.map(|m| m.methods());
    let entries = load_entries(&args.run, &catalog, methods.as_deref())?;
    if entries.is_empty() {
        return Err(Failure::msg(Kind::Empty, "the run contains no evaluated designs"));
    }

    let rows = frontier_rows(&entries, tdp_budget, args.top);
    if rows.is_empty() {
        return Err(Failure::msg(
            Kind::Empty,
            format!("no evaluated design has TDP within {tdp_budget} W"),
        ));
    }
    let out = args.out.as_deref().unwrap_or(&args.run);
    require_dir(out)?;
    let mut hashes = BTreeMap::new();
    write_frontier(out, &rows, &mut hashes)?;
    write_text(out, "pareto_points.csv", &points_csv(&entries, tdp_budget)?, &mut hashes)?;
    println!("{:<14} {:>12} {:>10} {:>10} {:>12}  hierarchy", "design_id", "tokens/s", "avg_W", "tdp_W", "tokens/J");
    for r in &rows {
        println!(
            "{:<14} {:>12.4} {:>10.2} {:>10.2} {:>12.6}  {} | {}",
            r.design_id, r.throughput_tps, r.avg_power_w, r.tdp_w, r.tokens_per_j, r.on_chip, r.off_chip
        );
    }
    if let Some(w) = structure_warning(manifest.stage, &rows[0]) {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
