//! Stage-level metrics: latency, throughput, power and energy for prefill,
//! decode, disaggregated prefill/decode serving and per-slice breakdowns.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::DesignPoint;
use crate::hierarchy::{effective_bandwidths, total_transfer_time_with, HierarchyError};
use crate::power::{system_power, Activity, PowerError, PowerReport, TierActivity};
use crate::traffic::{
    class_totals, stage_traffic, Direction, LayerKind, Phase, StreamKind, TrafficPlan,
};
use crate::workload::{
    decode_max_batch, expand_workload_flavor, Flavor, Workload, WorkloadError,
};

/// Default prefill-to-decode KV hand-off link, bytes/s.
pub const DEFAULT_LINK_BANDWIDTH: f64 = 900e9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty model: at least one layer is required")]
    EmptyModel,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("infeasible decode: {0}")]
    InfeasibleDecode(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    Compute,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBreakdown {
    pub kind: LayerKind,
    /// How many times this block executes in the stage.
    pub count: u64,
    pub matrix_s: f64,
    pub vector_s: f64,
    pub compute_s: f64,
    pub transfer_s: f64,
    pub latency_s: f64,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub label: String,
    pub latency_s: f64,
    pub tokens: f64,
    pub tps: f64,
    pub batch: u64,
    pub power: PowerReport,
    pub energy_j: f64,
    pub energy_per_token: f64,
    pub tokens_per_j: f64,
    pub bytes_moved: f64,
    pub matrix_utilization: f64,
    pub vector_utilization: f64,
    pub per_layer: Vec<LayerBreakdown>,
}

/// Runs one traffic plan `count` times per block kind.
fn evaluate_plan(
    design: &DesignPoint,
    plan: &TrafficPlan,
    kinds: &[LayerKind],
    count: u64,
    tokens: f64,
    batch: u64,
    label: &str,
) -> Result<StageResult, EvalError> {
    let hierarchy = &design.hierarchy;
    let latencies = hierarchy.latencies();
    let eff = effective_bandwidths(hierarchy)?;
    let share = design.strategy.bw_priority.matrix_share();
    let matrix_bw: Vec<f64> = eff.iter().map(|b| b * share).collect();
    let vector_bw: Vec<f64> = eff.iter().map(|b| b * (1.0 - share)).collect();
    let levels = hierarchy.len();
    let reps = count as f64;

    let mut per_layer = Vec::new();
    let mut reads = vec![0.0; levels];
    let mut writes = vec![0.0; levels];
    let mut latency = 0.0;
    let mut matrix_busy = 0.0;
    let mut vector_busy = 0.0;
    let mut bytes_moved = 0.0;
    for layer in plan.layers.iter().filter(|l| kinds.contains(&l.kind)) {
        let mut matrix_t = 0.0;
        let mut vector_t = 0.0;
        for r in &layer.requests {
            let (bw, acc) = match r.stream {
                StreamKind::Matrix => (&matrix_bw, &mut matrix_t),
                StreamKind::Vector => (&vector_bw, &mut vector_t),
            };
            *acc += total_transfer_time_with(&r.request, &latencies, bw)?;
            let sink = match r.direction {
                Direction::Read => &mut reads,
                Direction::Write => &mut writes,
            };
            for (slot, a) in sink.iter_mut().zip(&r.request.placement) {
                *slot += reps * a * r.request.total_bytes;
            }
            bytes_moved += reps * r.request.total_bytes;
        }
        let matrix_s = layer.macs / design.compute.peak_macs();
        let vector_s = layer.vector_ops / design.compute.peak_vector_ops();
        let compute_s = matrix_s.max(vector_s);
        let transfer_s = matrix_t.max(vector_t);
        let layer_latency = compute_s.max(transfer_s);
        latency += reps * layer_latency;
        matrix_busy += reps * matrix_s;
        vector_busy += reps * vector_s;
        per_layer.push(LayerBreakdown {
            kind: layer.kind,
            count,
            matrix_s,
            vector_s,
            compute_s,
            transfer_s,
            latency_s: layer_latency,
            bound: if compute_s >= transfer_s {
                Bound::Compute
            } else {
                Bound::Memory
            },
        });
    }
    if !(latency > 0.0) {
        return Err(EvalError::EmptyModel);
    }
    let activity = Activity {
        matrix_utilization: (matrix_busy / latency).min(1.0),
        vector_utilization: (vector_busy / latency).min(1.0),
        tiers: reads
            .iter()
            .zip(&writes)
            .map(|(r, w)| TierActivity {
                read_bw: r / latency,
                write_bw: w / latency,
            })
            .collect(),
    };
    let power = system_power(&design.compute, hierarchy, &design.compute_power, &activity)?;
    let energy_j = power.avg_power * latency;
    Ok(StageResult {
        label: label.to_string(),
        latency_s: latency,
        tokens,
        tps: tokens / latency,
        batch,
        energy_j,
        energy_per_token: energy_j / tokens,
        tokens_per_j: tokens / energy_j,
        bytes_moved,
        matrix_utilization: activity.matrix_utilization,
        vector_utilization: activity.vector_utilization,
        power,
        per_layer,
    })
}

const ALL_KINDS: [LayerKind; 2] = [LayerKind::Attention, LayerKind::Ffn];

fn check_model(workload: &Workload) -> Result<(), EvalError> {
    workload.model.check()?;
    if workload.model.num_layers == 0 {
        return Err(EvalError::EmptyModel);
    }
    Ok(())
}

fn prefill_plan(
    design: &DesignPoint,
    workload: &Workload,
    batch: u64,
) -> Result<(TrafficPlan, u64), EvalError> {
    let model = &workload.model;
    let plan = expand_workload_flavor(model, &workload.trace);
    let traffic = stage_traffic(
        model,
        &design.precision,
        &design.strategy,
        &design.hierarchy,
        &design.compute,
        Phase::Prefill {
            tokens: plan.tokens_per_pass,
        },
        plan.tokens_per_pass,
        batch,
    )?;
    Ok((traffic, u64::from(model.num_layers) * plan.passes))
}

/// Prefill with a single sequence.
pub fn eval_prefill(design: &DesignPoint, workload: &Workload) -> Result<StageResult, EvalError> {
    eval_prefill_with(design, workload, None)
}

pub fn eval_prefill_with(
    design: &DesignPoint,
    workload: &Workload,
    batch: Option<u64>,
) -> Result<StageResult, EvalError> {
    check_model(workload)?;
    if workload.trace.prompt_tokens == 0 {
        return Err(EvalError::InvalidTrace("prefill needs at least one prompt token".into()));
    }
    let b = batch.unwrap_or(1).max(1);
    let (traffic, count) = prefill_plan(design, workload, b)?;
    let tokens = (workload.trace.prompt_tokens * b) as f64;
    evaluate_plan(design, &traffic, &ALL_KINDS, count, tokens, b, "prefill")
}

/// Whether one prefill sequence (weights, its KV cache and the pass
/// activations) fits in the hierarchy.
pub fn prefill_fits(design: &DesignPoint, workload: &Workload) -> bool {
    let plan = expand_workload_flavor(&workload.model, &workload.trace);
    let phase = Phase::Prefill {
        tokens: plan.tokens_per_pass,
    };
    class_totals(&workload.model, &design.precision, phase, plan.tokens_per_pass, 1).total()
        <= design.hierarchy.total_capacity()
}

/// Phase and provisioned KV length of one decode step or denoising pass.
fn decode_phase(workload: &Workload, context: u64) -> (Phase, u64) {
    let trace = &workload.trace;
    match workload.model.diffusion_steps {
        Some(_) => (
            Phase::Prefill {
                tokens: trace.total_tokens(),
            },
            trace.total_tokens(),
        ),
        None => (Phase::Decode { context }, trace.total_tokens()),
    }
}

/// Largest batch whose weights, KV cache and step activations all fit.
pub fn decode_batch(design: &DesignPoint, workload: &Workload) -> Result<u64, EvalError> {
    let model = &workload.model;
    let mut b = decode_max_batch(model, &design.precision, &workload.trace, &design.hierarchy)?;
    let capacity = design.hierarchy.total_capacity();
    let (phase, kv_tokens) = decode_phase(workload, workload.trace.total_tokens());
    while b > 0 && class_totals(model, &design.precision, phase, kv_tokens, b).total() > capacity {
        b -= 1;
    }
    Ok(b)
}

fn decode_slice(
    design: &DesignPoint,
    workload: &Workload,
    batch: u64,
    context: u64,
    steps: u64,
    label: &str,
) -> Result<StageResult, EvalError> {
    let model = &workload.model;
    let (phase, kv_tokens) = decode_phase(workload, context);
    let traffic = stage_traffic(
        model,
        &design.precision,
        &design.strategy,
        &design.hierarchy,
        &design.compute,
        phase,
        kv_tokens,
        batch,
    )?;
    let generated = workload.trace.generated_tokens as f64;
    let (count, tokens) = match model.diffusion_steps {
        // `steps` denoising passes out of the full schedule.
        Some(total_steps) => (
            u64::from(model.num_layers) * steps,
            batch as f64 * generated * steps as f64 / f64::from(total_steps),
        ),
        None => (u64::from(model.num_layers) * steps, (batch * steps) as f64),
    };
    evaluate_plan(design, &traffic, &ALL_KINDS, count, tokens, batch, label)
}

/// Decode at the largest batch the hierarchy can hold, evaluated at the
/// mid-trace KV length.
pub fn eval_decode(design: &DesignPoint, workload: &Workload) -> Result<StageResult, EvalError> {
    eval_decode_with(design, workload, None)
}

pub fn eval_decode_with(
    design: &DesignPoint,
    workload: &Workload,
    batch: Option<u64>,
) -> Result<StageResult, EvalError> {
    check_model(workload)?;
    let trace = &workload.trace;
    if trace.generated_tokens == 0 {
        return Err(EvalError::InvalidTrace("decode needs at least one generated token".into()));
    }
    let b = match batch {
        Some(b) => b,
        None => decode_batch(design, workload)?,
    };
    if b == 0 {
        return Err(EvalError::InfeasibleDecode(format!(
            "no sequence of {} tokens fits beside the weights in {:.1} GB",
            trace.total_tokens(),
            design.hierarchy.total_capacity() / 1e9
        )));
    }
    let steps = match workload.model.diffusion_steps {
        Some(s) => u64::from(s),
        None => trace.generated_tokens,
    };
    let context = trace.prompt_tokens + trace.generated_tokens / 2;
    decode_slice(design, workload, b, context, steps, "decode")
}

/// Disaggregated prefill + decode serving over a KV hand-off link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdResult {
    pub ttft_s: f64,
    pub kv_transfer_s: f64,
    pub kv_transfer_j: f64,
    pub prefill_tps: f64,
    pub decode_tps: f64,
    pub batch: u64,
    pub tokens: f64,
    pub energy_j: f64,
    pub energy_per_token: f64,
    pub tokens_per_j: f64,
}

/// Combines a prefill device and (optionally) a decode device. Energy
/// covers one decode batch: its prefills, their KV hand-offs and the decode
/// run. Hand-off energy reads the KV from the prefill device's outermost
/// tier and writes it into the decode device's outermost tier.
pub fn eval_pd_combined(
    prefill_design: &DesignPoint,
    prefill: &StageResult,
    decode: Option<(&DesignPoint, &StageResult)>,
    kv_bytes_per_seq: f64,
    link_bandwidth: f64,
) -> PdResult {
    let Some((decode_design, decode)) = decode else {
        return PdResult {
            ttft_s: prefill.latency_s,
            kv_transfer_s: 0.0,
            kv_transfer_j: 0.0,
            prefill_tps: prefill.tps,
            decode_tps: 0.0,
            batch: prefill.batch,
            tokens: prefill.tokens,
            energy_j: prefill.energy_j,
            energy_per_token: prefill.energy_per_token,
            tokens_per_j: prefill.tokens_per_j,
        };
    };
    let kv_transfer_s = kv_bytes_per_seq / link_bandwidth;
    let e_read = prefill_design
        .hierarchy
        .tiers
        .last()
        .map_or(0.0, |t| t.tech.e_read);
    let e_write = decode_design
        .hierarchy
        .tiers
        .last()
        .map_or(0.0, |t| t.tech.e_write);
    let kv_transfer_j = kv_bytes_per_seq * 8.0 * (e_read + e_write);
    // Each decode sequence needs its own prefill and hand-off.
    let seqs = decode.batch as f64 / prefill.batch.max(1) as f64;
    let energy_j = seqs * (prefill.energy_j + kv_transfer_j * prefill.batch as f64) + decode.energy_j;
    let tokens = seqs * prefill.tokens + decode.tokens;
    PdResult {
        ttft_s: prefill.latency_s + kv_transfer_s,
        kv_transfer_s,
        kv_transfer_j,
        prefill_tps: prefill.tps,
        decode_tps: decode.tps,
        batch: decode.batch,
        tokens,
        energy_j,
        energy_per_token: energy_j / tokens,
        tokens_per_j: tokens / energy_j,
    }
}

/// Evaluates both stages and combines them.
pub fn eval_combined(
    prefill_design: &DesignPoint,
    decode_design: &DesignPoint,
    workload: &Workload,
    link_bandwidth: f64,
) -> Result<PdResult, EvalError> {
    let prefill = eval_prefill(prefill_design, workload)?;
    let kv = workload.model.kv_bytes_per_token(&prefill_design.precision)
        * workload.trace.prompt_tokens as f64;
    if workload.trace.generated_tokens == 0 {
        return Ok(eval_pd_combined(prefill_design, &prefill, None, kv, link_bandwidth));
    }
    let decode = eval_decode(decode_design, workload)?;
    Ok(eval_pd_combined(
        prefill_design,
        &prefill,
        Some((decode_design, &decode)),
        kv,
        link_bandwidth,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slice {
    PrefillAttention,
    PrefillFfn,
    DecodeEarly,
    DecodeLate,
}

impl Slice {
    pub fn label(self) -> &'static str {
        match self {
            Slice::PrefillAttention => "prefill-attention",
            Slice::PrefillFfn => "prefill-ffn",
            Slice::DecodeEarly => "decode-early",
            Slice::DecodeLate => "decode-late",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub slice: Slice,
    pub result: StageResult,
}

/// Prefill split by block kind and decode split into the first and second
/// half of the generated tokens, each evaluated at its own mid-slice KV
/// length.
pub fn stage_breakdown(design: &DesignPoint, workload: &Workload) -> Result<Vec<SliceResult>, EvalError> {
    check_model(workload)?;
    let trace = &workload.trace;
    let mut out = Vec::with_capacity(4);
    if trace.prompt_tokens > 0 {
        let (traffic, count) = prefill_plan(design, workload, 1)?;
        let tokens = trace.prompt_tokens as f64;
        for (slice, kind) in [
            (Slice::PrefillAttention, LayerKind::Attention),
            (Slice::PrefillFfn, LayerKind::Ffn),
        ] {
            let result = evaluate_plan(design, &traffic, &[kind], count, tokens, 1, slice.label())?;
            out.push(SliceResult { slice, result });
        }
    }
    if trace.generated_tokens == 0 {
        return Ok(out);
    }
    let b = decode_batch(design, workload)?;
    if b == 0 {
        return Err(EvalError::InfeasibleDecode("decode batch is zero".into()));
    }
    let g = trace.generated_tokens;
    let (early_steps, late_steps) = match workload.model.diffusion_steps {
        Some(s) => (u64::from(s) / 2, u64::from(s) - u64::from(s) / 2),
        None => (g / 2, g - g / 2),
    };
    let flavor = expand_workload_flavor(&workload.model, trace).flavor;
    for (slice, steps, context) in [
        (Slice::DecodeEarly, early_steps, trace.prompt_tokens + g / 4),
        (Slice::DecodeLate, late_steps, trace.prompt_tokens + 3 * g / 4),
    ] {
        if steps == 0 {
            continue;
        }
        let ctx = if flavor == Flavor::Diffusion { trace.total_tokens() } else { context };
        let result = decode_slice(design, workload, b, ctx, steps, slice.label())?;
        out.push(SliceResult { slice, result });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::power::tdp;
    use crate::presets;
    use approx::assert_relative_eq;

    fn design(name: &str) -> DesignPoint {
        presets::design(name).resolve(&Catalog::bundled(), None).unwrap()
    }

    fn workload(name: &str) -> Workload {
        presets::workload(name).workload()
    }

    fn check_consistency(r: &StageResult, design: &DesignPoint) {
        assert_relative_eq!(r.tps * r.latency_s, r.tokens, max_relative = 1e-12);
        assert_relative_eq!(r.energy_j, r.power.avg_power * r.latency_s, max_relative = 1e-12);
        assert_relative_eq!(r.energy_per_token, r.energy_j / r.tokens, max_relative = 1e-12);
        assert_relative_eq!(r.tokens_per_j * r.energy_per_token, 1.0, max_relative = 1e-12);
        let summed: f64 = r.per_layer.iter().map(|l| l.count as f64 * l.latency_s).sum();
        assert_relative_eq!(summed, r.latency_s, max_relative = 1e-9);
        for l in &r.per_layer {
            assert_relative_eq!(l.latency_s, l.compute_s.max(l.transfer_s), max_relative = 1e-12);
            assert_relative_eq!(l.compute_s, l.matrix_s.max(l.vector_s), max_relative = 1e-12);
        }
        assert!((0.0..=1.0).contains(&r.matrix_utilization));
        assert!((0.0..=1.0).contains(&r.vector_utilization));
        let peak = tdp(&design.compute, &design.hierarchy, &design.compute_power).unwrap();
        assert!(r.power.avg_power <= peak + 1e-9, "avg {} > tdp {}", r.power.avg_power, peak);
    }

    #[test]
    fn stage_metrics_are_self_consistent() {
        for d in ["p1", "d1", "d2"] {
            let design = design(d);
            for w in ["osworld_l", "qwen3_32b_bfcl", "llada_8b_gsm8k", "qwen35_397b_moe"] {
                let wl = workload(w);
                let p = eval_prefill(&design, &wl).unwrap();
                check_consistency(&p, &design);
                assert_eq!(p.batch, 1);
                assert_eq!(p.tokens, wl.trace.prompt_tokens as f64);
                if let Ok(dec) = eval_decode(&design, &wl) {
                    check_consistency(&dec, &design);
                    assert!(dec.batch >= 1);
                }
            }
        }
    }

    #[test]
    fn empty_model_is_rejected() {
        let mut wl = workload("osworld_l");
        wl.model.num_layers = 0;
        assert!(matches!(eval_prefill(&design("p1"), &wl), Err(EvalError::EmptyModel)));
        assert!(matches!(eval_decode(&design("p1"), &wl), Err(EvalError::EmptyModel)));
    }

    #[test]
    fn infeasible_bandwidth_propagates() {
        let err = eval_prefill(&design("base"), &workload("osworld_l")).unwrap_err();
        assert!(matches!(err, EvalError::Hierarchy(HierarchyError::InfeasibleBandwidth { .. })));
    }

    #[test]
    fn forced_decode_batch_is_honoured() {
        let r = eval_decode_with(&design("d2"), &workload("osworld_l"), Some(1)).unwrap();
        assert_eq!(r.batch, 1);
        assert_eq!(r.tokens, workload("osworld_l").trace.generated_tokens as f64);
    }

    #[test]
    fn decode_throughput_grows_with_batch_when_weight_bound() {
        // Short contexts keep per-sequence KV traffic small next to the
        // shared weight stream, so batching amortises the weights.
        let mut wl = workload("osworld_l");
        wl.trace.prompt_tokens = 512;
        wl.trace.generated_tokens = 128;
        let d = design("d2");
        let mut last = 0.0;
        for b in [1, 2, 4, 8, 16] {
            let r = eval_decode_with(&d, &wl, Some(b)).unwrap();
            assert!(r.tps >= last, "batch {b}: {} < {last}", r.tps);
            last = r.tps;
        }
    }

    #[test]
    fn capacity_tier_raises_decode_batch() {
        let catalog = Catalog::bundled();
        let wl = workload("osworld_l");
        let file = presets::design("d2");
        let without = {
            let mut f = file.clone();
            f.hierarchy.retain(|t| t.tech != "LPDDR5X");
            decode_batch(&f.resolve(&catalog, None).unwrap(), &wl).unwrap()
        };
        let with = decode_batch(&file.resolve(&catalog, None).unwrap(), &wl).unwrap();
        assert!(with > without, "{with} <= {without}");
    }

    #[test]
    fn breakdown_covers_both_stages() {
        let d = design("p1");
        let wl = workload("osworld_l");
        let slices = stage_breakdown(&d, &wl).unwrap();
        let labels: Vec<_> = slices.iter().map(|s| s.slice).collect();
        assert_eq!(
            labels,
            vec![Slice::PrefillAttention, Slice::PrefillFfn, Slice::DecodeEarly, Slice::DecodeLate]
        );
        let prefill = eval_prefill(&d, &wl).unwrap();
        let split: f64 = slices[..2].iter().map(|s| s.result.latency_s).sum();
        assert_relative_eq!(split, prefill.latency_s, max_relative = 1e-9);

        let early = &slices[2].result;
        let late = &slices[3].result;
        assert!(late.latency_s / late.tokens >= early.latency_s / early.tokens);
        let decode = eval_decode(&d, &wl).unwrap();
        let e_split = early.energy_j + late.energy_j;
        assert_relative_eq!(e_split, decode.energy_j, max_relative = 0.02);
    }

    #[test]
    fn breakdown_skips_empty_decode() {
        let mut wl = workload("osworld_l");
        wl.trace.generated_tokens = 0;
        let slices = stage_breakdown(&design("p1"), &wl).unwrap();
        assert_eq!(slices.len(), 2);
    }

    #[test]
    fn pd_link_time_and_limits() {
        let p = design("p1");
        let d = design("d2");
        let wl = workload("osworld_l");
        let pre = eval_prefill(&p, &wl).unwrap();
        let dec = eval_decode(&d, &wl).unwrap();
        let r = eval_pd_combined(&p, &pre, Some((&d, &dec)), 14.7e9, 900e9);
        assert_relative_eq!(r.kv_transfer_s, 14.7e9 / 900e9, max_relative = 1e-12);
        assert_relative_eq!(r.ttft_s, pre.latency_s + 0.016333333333333333, max_relative = 1e-9);
        let fast = eval_pd_combined(&p, &pre, Some((&d, &dec)), 14.7e9, f64::INFINITY);
        assert_eq!(fast.ttft_s, pre.latency_s);
        assert!(r.energy_j > dec.energy_j);
        assert_relative_eq!(r.tokens_per_j * r.energy_per_token, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn pd_without_generation_equals_prefill() {
        let mut wl = workload("osworld_l");
        wl.trace.generated_tokens = 0;
        let p = design("p1");
        let pre = eval_prefill(&p, &wl).unwrap();
        let r = eval_combined(&p, &design("d1"), &wl, DEFAULT_LINK_BANDWIDTH).unwrap();
        assert_eq!(r.ttft_s, pre.latency_s);
        assert_eq!(r.energy_j, pre.energy_j);
        assert_eq!(r.tokens_per_j, pre.tokens_per_j);
        assert_eq!(r.decode_tps, 0.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let d = design("d1");
        let wl = workload("qwen35_397b_moe");
        let a = serde_json::to_string(&eval_decode(&d, &wl).unwrap()).unwrap();
        let b = serde_json::to_string(&eval_decode(&d, &wl).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
