//! `eval` (one design, one workload) and `validate` (transfer oracle).

use memexplorer_core::evaluator::{eval_combined, stage_breakdown, EvalError};
use memexplorer_core::oracle::validate_against_analytic;
use memexplorer_core::power::tdp;
use memexplorer_core::workload::WorkloadError;
use memexplorer_core::{eval_decode, eval_prefill, DesignPoint, ShorelineBudget, Stage, Workload};
use serde::Serialize;
use serde_json::Value;

use crate::failure::{Failure, Kind, Tag};
use crate::inputs::{invalid, load_catalog, load_design, load_workload, write_json};
use crate::{EvalArgs, EvalStage, ValidateArgs};

/// Input problems exit 2; everything the model rules out exits 3.
fn classify(e: &EvalError) -> Kind {
    match e {
        EvalError::EmptyModel | EvalError::InvalidTrace(_) => Kind::Invalid,
        EvalError::Workload(
            WorkloadError::Parse { .. } | WorkloadError::Io { .. } | WorkloadError::Invalid(_) | WorkloadError::EmptyTrace,
        ) => Kind::Invalid,
        EvalError::Power(_) => Kind::Invalid,
        EvalError::Workload(_) | EvalError::InfeasibleDecode(_) | EvalError::Hierarchy(_) => Kind::Infeasible,
    }
}

fn eval_failure(e: EvalError) -> Failure {
    let kind = classify(&e);
    Failure::new(kind, e)
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    stage: &'a str,
    design: Option<&'a str>,
    tdp_w: f64,
    #[serde(flatten)]
    result: T,
}

/// Resolves a design file and applies the structural and shoreline checks.
fn prepare(
    path: &std::path::Path,
    catalog: &memexplorer_core::Catalog,
    workload: &memexplorer_core::WorkloadFile,
    budget: Option<f64>,
) -> Result<(DesignPoint, f64), Failure> {
    let (file, _) = load_design(path)?;
    let design = file
        .resolve(catalog, workload.precision)
        .tag_with(Kind::Invalid, || path.display().to_string())?;
    let report = design.feasibility(catalog, &ShorelineBudget::default());
    if !report.feasible {
        return Err(Failure::msg(
            Kind::Infeasible,
            format!("{}: infeasible design: {}", path.display(), report.summary()),
        ));
    }
    let peak = tdp(&design.compute, &design.hierarchy, &design.compute_power)
        .map_err(|e| eval_failure(EvalError::Power(e)))?;
    if let Some(limit) = budget {
        if peak > limit {
            return Err(Failure::msg(
                Kind::Infeasible,
                format!("{}: TDP {peak:.1} W exceeds the {limit:.1} W budget", path.display()),
            ));
        }
    }
    Ok((design, peak))
}

pub fn run(args: &EvalArgs) -> Result<(), Failure> {
    if !(args.link_gbps > 0.0) {
        return Err(invalid(format!("--link-gbps must be positive, got {}", args.link_gbps)));
    }
    let (catalog, _) = load_catalog()?;
    let (wfile, _) = load_workload(&args.workload)?;
    let workload: Workload = wfile.workload();
    let (design, peak) = prepare(&args.design, &catalog, &wfile, args.tdp)?;
    let stage = args.stage.unwrap_or(match workload.trace.stage {
        Stage::Prefill => EvalStage::Prefill,
        Stage::Decode => EvalStage::Decode,
        Stage::Combined => EvalStage::Combined,
    });
    let name = design.name.as_deref();
    let (document, summary): (Value, String) = match stage {
        EvalStage::Prefill | EvalStage::Decode => {
            let (label, result) = if stage == EvalStage::Prefill {
                ("prefill", eval_prefill(&design, &workload))
            } else {
                ("decode", eval_decode(&design, &workload))
            };
            let result = result.map_err(eval_failure)?;
            let summary = format!(
                "{label}: {:.4} tokens/s, batch {}, avg {:.1} W, TDP {:.1} W, {:.4} tokens/J",
                result.tps, result.batch, result.power.avg_power, peak, result.tokens_per_j
            );
            let doc = serde_json::to_value(Tagged {
                stage: label,
                design: name,
                tdp_w: peak,
                result,
            })
            .tag(Kind::Runtime)?;
            (doc, summary)
        }
        EvalStage::Combined => {
            let decode_design = match &args.decode_design {
                Some(path) => prepare(path, &catalog, &wfile, args.tdp)?.0,
                None => design.clone(),
            };
            let result = eval_combined(&design, &decode_design, &workload, args.link_gbps * 1e9)
                .map_err(eval_failure)?;
            let summary = format!(
                "combined: TTFT {:.4} s, decode {:.4} tokens/s, batch {}, {:.4} tokens/J",
                result.ttft_s, result.decode_tps, result.batch, result.tokens_per_j
            );
            let doc = serde_json::to_value(Tagged {
                stage: "combined",
                design: name,
                tdp_w: peak,
                result,
            })
            .tag(Kind::Runtime)?;
            (doc, summary)
        }
        EvalStage::Breakdown => {
            let slices = stage_breakdown(&design, &workload).map_err(eval_failure)?;
            let summary = slices
                .iter()
                .map(|s| format!("{} {:.4} s", s.slice.label(), s.result.latency_s))
                .collect::<Vec<_>>()
                .join(", ");
            #[derive(Serialize)]
            struct Slices<T> {
                slices: T,
            }
            let doc = serde_json::to_value(Tagged {
                stage: "breakdown",
                design: name,
                tdp_w: peak,
                result: Slices { slices },
            })
            .tag(Kind::Runtime)?;
            (doc, format!("breakdown: {summary}"))
        }
    };
    write_json(&args.out, &document)?;
    println!("{summary}");
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    if !(args.tolerance >= 0.0) {
        return Err(invalid(format!("--tolerance must be non-negative, got {}", args.tolerance)));
    }
    let (catalog, _) = load_catalog()?;
    let report = validate_against_analytic(args.cases, args.seed, args.tolerance, args.chunk_bytes, &catalog)
        .tag(Kind::Invalid)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!(
        "{} cases, seed {}, chunk {} B: max relative error {:.4}%, mean {:.4}%, {} outside {:.2}%",
        report.n_cases,
        report.seed,
        report.chunk_bytes,
        100.0 * report.max_rel_err,
        100.0 * report.mean_rel_err,
        report.failures.len(),
        100.0 * report.tolerance
    );
    if report.passed() {
        Ok(())
    } else {
        for case in &report.failures {
            eprintln!(
                "case {}: {} analytic {:.6e} s, simulated {:.6e} s, relative error {:.4}%",
                case.index,
                case.hierarchy,
                case.analytic_s,
                case.oracle_s,
                100.0 * case.rel_err
            );
        }
        Err(Failure::msg(
            Kind::Runtime,
            format!("{} of {} cases exceed the tolerance", report.failures.len(), report.n_cases),
        ))
    }
}
