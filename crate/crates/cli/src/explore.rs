//! `explore`: runs every requested method for every seed and writes the
//! run directory.
//!
//! Layout of the output directory:
//!
//! - `history_<method>_<seed>.csv`: step, hv, throughput_tps, power_w, design_id
//! - `hv_summary.csv`: method, step, hv_mean, hv_std, n_seeds
//! - `evaluations.csv`: every distinct design evaluated by each run
//! - `frontier.csv`: the most energy-efficient designs within the budget
//! - `designs/<design_id>.json`: design files for every evaluated design
//! - `manifest.json`: resolved flags, input hashes and output hashes

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use memexplorer_dse::{run_dse, DesignSpace, DseError, DseOptions, DseRun, Method, Problem, Stage};
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Kind, Tag};
use crate::inputs::{load_catalog, load_workload, read_text, require_dir, sha256_hex, write_json, InputRecord};
use crate::report::{frontier_rows, structure_warning, write_frontier, EvaluationRecord};
use crate::ExploreArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Prefill,
    Decode,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Prefill => Stage::Prefill,
            StageArg::Decode => Stage::Decode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ehvi,
    Nsga2,
    Random,
    All,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Ehvi => vec![Method::Ehvi],
            MethodArg::Nsga2 => vec![Method::Nsga2],
            MethodArg::Random => vec![Method::Random],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Serialize)]
struct HistoryRow<'a> {
    step: usize,
    hv: f64,
    throughput_tps: f64,
    power_w: f64,
    design_id: &'a str,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    method: String,
    step: usize,
    hv_mean: f64,
    hv_std: f64,
    n_seeds: usize,
}

/// What was run, from which inputs, producing which files.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub stage: Stage,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub n_init: usize,
    pub tdp_w: f64,
    pub pool_size: usize,
    pub top: usize,
    pub inputs: BTreeMap<String, ManifestInput>,
    /// SHA-256 of every CSV written, by file name.
    pub outputs: BTreeMap<String, String>,
    /// Informational; excluded from reproducibility comparisons.
    pub timestamp_unix: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestInput {
    pub source: String,
    pub sha256: String,
}

impl From<InputRecord> for ManifestInput {
    fn from(r: InputRecord) -> Self {
        ManifestInput {
            source: r.source,
            sha256: r.sha256,
        }
    }
}

fn dse_failure(e: DseError) -> Failure {
    let kind = match e {
        DseError::Space(_) | DseError::Options(_) | DseError::Encoding(_) => Kind::Invalid,
        DseError::SearchSpace(_) | DseError::Infeasible(_) => Kind::Infeasible,
        DseError::Numerical(_) | DseError::Unsupported(_) => Kind::Runtime,
    };
    Failure::new(kind, e)
}

/// Serializes rows to CSV text ('.' decimals, LF line endings).
pub fn csv_text<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<String, Failure> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).tag(Kind::Runtime)?;
    for row in rows {
        w.serialize(row).tag(Kind::Runtime)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::msg(Kind::Runtime, e))?;
    String::from_utf8(bytes).tag(Kind::Runtime)
}

pub fn write_text(dir: &Path, name: &str, text: &str, hashes: &mut BTreeMap<String, String>) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, text).tag_with(Kind::Runtime, || format!("cannot write {}", path.display()))?;
    hashes.insert(name.to_string(), sha256_hex(text.as_bytes()));
    Ok(())
}

fn history_csv(run: &DseRun) -> Result<String, Failure> {
    let rows = run.history.entries.iter().map(|e| HistoryRow {
        step: e.step,
        hv: e.hv_after,
        throughput_tps: e.eval.throughput_tps,
        power_w: e.eval.power_w,
        design_id: &e.design_id,
    });
    csv_text(rows, &["step", "hv", "throughput_tps", "power_w", "design_id"])
}

/// Per-step mean and sample standard deviation of the hypervolume across
/// seeds. Steps beyond a run's end (a run that exhausted the space) hold
/// its final value.
fn summary_rows(method: Method, runs: &[&DseRun]) -> Vec<SummaryRow> {
    let steps = runs.iter().map(|r| r.history.entries.len()).max().unwrap_or(0);
    (0..steps)
        .map(|s| {
            let hv: Vec<f64> = runs
                .iter()
                .map(|r| {
                    let e = &r.history.entries;
                    e.get(s).or(e.last()).map_or(0.0, |x| x.hv_after)
                })
                .collect();
            let n = hv.len() as f64;
            let mean = hv.iter().sum::<f64>() / n;
            let var = if hv.len() > 1 {
                hv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                method: method.to_string(),
                step: s + 1,
                hv_mean: mean,
                hv_std: var.sqrt(),
                n_seeds: hv.len(),
            }
        })
        .collect()
}

pub fn run(args: &ExploreArgs) -> Result<(), Failure> {
    if args.seeds == 0 {
        return Err(crate::inputs::invalid("--seeds must be at least 1"));
    }
    let (catalog, catalog_record) = load_catalog()?;
    let (wfile, workload_record) = load_workload(&args.workload)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("catalog".to_string(), ManifestInput::from(catalog_record));
    inputs.insert("workload".to_string(), ManifestInput::from(workload_record));
    let space = match &args.space {
        Some(path) => {
            let (text, record) = read_text(path)?;
            inputs.insert("space".to_string(), ManifestInput::from(record));
            serde_json::from_str::<DesignSpace>(&text).tag_with(Kind::Invalid, || path.display().to_string())?
        }
        None => DesignSpace::default(),
    };
    let stage = Stage::from(args.stage);
    let problem = Problem::new(space, catalog, wfile.workload(), stage, args.tdp).map_err(dse_failure)?;
    let opts = DseOptions {
        budget: args.budget,
        n_init: args.n_init,
        pool_size: args.pool_size,
        ..DseOptions::default()
    };

    let mut methods: Vec<Method> = Vec::new();
    for m in args.methods.iter().flat_map(|m| m.methods()) {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| args.first_seed + i).collect();

    let out = &args.out;
    require_dir(&out.join("designs"))?;
    let mut hashes = BTreeMap::new();
    let mut runs: Vec<(Method, u64, DseRun)> = Vec::new();
    for &method in &methods {
        for &seed in &seeds {
            let run = run_dse(&problem, method, seed, &opts).map_err(|e| {
                let f = dse_failure(e);
                Failure::new(f.kind, f.error.context(format!("{method} run with seed {seed} failed")))
            })?;
            println!(
                "{method} seed {seed}: {} evaluations, final hypervolume {:.6e}{}",
                run.history.entries.len(),
                run.history.final_hv(),
                if run.exhausted { " (space exhausted)" } else { "" }
            );
            write_text(out, &format!("history_{method}_{seed}.csv"), &history_csv(&run)?, &mut hashes)?;
            runs.push((method, seed, run));
        }
    }

    let mut summary = Vec::new();
    for &method in &methods {
        let of_method: Vec<&DseRun> = runs.iter().filter(|r| r.0 == method).map(|r| &r.2).collect();
        summary.extend(summary_rows(method, &of_method));
    }
    let summary_text = csv_text(summary, &["method", "step", "hv_mean", "hv_std", "n_seeds"])?;
    write_text(out, "hv_summary.csv", &summary_text, &mut hashes)?;

    let mut records = Vec::new();
    let mut entries = Vec::new();
    for (method, seed, run) in &runs {
        for e in &run.evaluated {
            let path = out.join("designs").join(format!("{}.json", e.design_id));
            if !path.exists() {
                write_json(&path, &e.design.to_file())?;
            }
            records.push(EvaluationRecord::new(*method, *seed, e));
            entries.push(e.clone());
        }
    }
    let eval_text = csv_text(&records, &EvaluationRecord::COLUMNS)?;
    write_text(out, "evaluations.csv", &eval_text, &mut hashes)?;

    let rows = frontier_rows(&entries, args.tdp, args.top);
    write_frontier(out, &rows, &mut hashes)?;
    match rows.first() {
        Some(best) => {
            println!(
                "most efficient within {:.0} W: {} ({} | {}) {:.4} tokens/J",
                args.tdp, best.design_id, best.on_chip, best.off_chip, best.tokens_per_j
            );
            if let Some(w) = structure_warning(stage, best) {
                eprintln!("warning: {w}");
            }
        }
        None => println!("no evaluated design within {:.0} W", args.tdp),
    }

    let manifest = Manifest {
        tool: "memexplorer".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "explore".into(),
        stage,
        methods,
        seeds,
        budget: args.budget,
        n_init: args.n_init,
        tdp_w: args.tdp,
        pool_size: args.pool_size,
        top: args.top,
        inputs,
        outputs: hashes,
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("wrote {}", out.display());
    Ok(())
}
