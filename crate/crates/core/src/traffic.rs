//! Per-layer work and memory traffic for one forward step.
//!
//! Every transformer layer is split into an attention block and an FFN
//! block. Each block reports its multiply-accumulates, vector element
//! operations and the bytes it moves, tagged by data class (weights, KV
//! cache, activations), stream (matrix operands vs. vector-unit traffic)
//! and direction. GEMM re-read factors follow a systolic fold model:
//!
//! | dataflow | rows × cols hold | W traffic     | X traffic     | Y traffic          |
//! |----------|------------------|---------------|---------------|--------------------|
//! | WS       | K × N            | once          | × ⌈N/cols⌉    | × (2⌈K/rows⌉ − 1)  |
//! | IS       | K × M            | × ⌈M/cols⌉    | once          | × (2⌈K/rows⌉ − 1)  |
//! | OS       | M × N            | × ⌈M/rows⌉    | × ⌈N/cols⌉    | once               |
//!
//! (`X` is the M×K input, `W` the K×N weight, `Y` the M×N output; partial
//! sums spill and return when K is folded.) Attention is streamed
//! flash-style, so score matrices never reach memory.
//!
//! Each class is then assigned a placement over the tiers: the operand the
//! dataflow keeps stationary claims on-chip space first, the storage
//! priority decides who gets the rest of on-chip memory, and residual bytes
//! fill the off-chip tiers outward.

use serde::{Deserialize, Serialize};

use crate::design::{ComputeSpec, Dataflow, PrecisionConfig, SoftwareStrategy, StoragePriority};
use crate::hierarchy::{HierarchyError, HierarchySpec, TransferRequest};
use crate::workload::{ModelSpec, WorkloadError};

/// Vector element operations per softmax score (max, exp, sum/scale).
pub const SOFTMAX_OPS: f64 = 3.0;
/// Vector element operations per RMSNorm element.
pub const NORM_OPS: f64 = 4.0;
/// Vector element operations per gated-activation element (SiLU and product).
pub const GATED_ACT_OPS: f64 = 4.0;
/// Vector element operations per rotary-embedding element.
pub const ROPE_OPS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataClass {
    Weight,
    Kv,
    Activation,
}

impl DataClass {
    pub const ALL: [DataClass; 3] = [DataClass::Weight, DataClass::Kv, DataClass::Activation];

    fn index(self) -> usize {
        match self {
            DataClass::Weight => 0,
            DataClass::Kv => 1,
            DataClass::Activation => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    Matrix,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerKind {
    Attention,
    Ffn,
}

/// Shape of one forward step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Causal pass over `tokens` new tokens per sequence.
    Prefill { tokens: u64 },
    /// One new token per sequence attending over `context` cached tokens.
    Decode { context: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperandTraffic {
    pub name: &'static str,
    pub class: DataClass,
    pub stream: StreamKind,
    pub direction: Direction,
    pub bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerWork {
    pub kind: LayerKind,
    pub macs: f64,
    pub vector_ops: f64,
    pub operands: Vec<OperandTraffic>,
}

impl LayerWork {
    pub fn bytes(&self) -> f64 {
        self.operands.iter().map(|o| o.bytes).sum()
    }

    pub fn class_bytes(&self, class: DataClass) -> f64 {
        self.operands
            .iter()
            .filter(|o| o.class == class)
            .map(|o| o.bytes)
            .sum()
    }
}

/// Bytes each class must keep resident.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassBytes {
    pub weight: f64,
    pub kv: f64,
    pub activation: f64,
}

impl ClassBytes {
    pub fn get(&self, class: DataClass) -> f64 {
        match class {
            DataClass::Weight => self.weight,
            DataClass::Kv => self.kv,
            DataClass::Activation => self.activation,
        }
    }

    pub fn total(&self) -> f64 {
        self.weight + self.kv + self.activation
    }
}

/// Per-class fraction of resident bytes at each tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub totals: ClassBytes,
    /// `bytes[tier][class]` with classes ordered weight, kv, activation.
    pub bytes: Vec<[f64; 3]>,
}

impl Placement {
    pub fn alpha(&self, class: DataClass) -> Vec<f64> {
        let total = self.totals.get(class);
        let k = class.index();
        if total <= 0.0 {
            let mut a = vec![0.0; self.bytes.len()];
            a[0] = 1.0;
            return a;
        }
        let mut a: Vec<f64> = self.bytes.iter().map(|t| (t[k] / total).clamp(0.0, 1.0)).collect();
        // Remove rounding drift so the fractions sum to one.
        let sum: f64 = a.iter().sum();
        if let Some(last) = a.iter().rposition(|&v| v > 0.0) {
            a[last] = (a[last] + 1.0 - sum).clamp(0.0, 1.0);
        }
        a
    }

    pub fn on_chip_fraction(&self, class: DataClass, on_chip_tiers: usize) -> f64 {
        self.alpha(class).iter().take(on_chip_tiers).sum()
    }
}

/// Operand class the dataflow keeps stationary.
pub fn stationary_class(dataflow: Dataflow) -> DataClass {
    match dataflow {
        Dataflow::WS => DataClass::Weight,
        Dataflow::IS | Dataflow::OS => DataClass::Activation,
    }
}

/// Order in which classes take leftover capacity after the priority class.
const FILL_ORDER: [DataClass; 3] = [DataClass::Activation, DataClass::Kv, DataClass::Weight];

fn fill_order(priority: StoragePriority) -> Vec<DataClass> {
    let first = match priority {
        StoragePriority::Activation => Some(DataClass::Activation),
        StoragePriority::KVCache => Some(DataClass::Kv),
        StoragePriority::Weight => Some(DataClass::Weight),
        StoragePriority::Equal => None,
    };
    let mut order: Vec<DataClass> = first.into_iter().collect();
    order.extend(FILL_ORDER.iter().copied().filter(|c| Some(*c) != first));
    order
}

/// Assigns each class's resident bytes to tiers.
pub fn place_classes(
    totals: ClassBytes,
    pinned: (DataClass, f64),
    priority: StoragePriority,
    hierarchy: &HierarchySpec,
) -> Result<Placement, WorkloadError> {
    let capacity = hierarchy.total_capacity();
    let required = totals.total();
    if required > capacity {
        return Err(WorkloadError::CapacityExceeded {
            required,
            available: capacity,
            shortfall: required - capacity,
        });
    }
    let levels = hierarchy.len();
    let on_chip_tiers = hierarchy.on_chip_count();
    let on_chip_capacity: f64 = hierarchy.tiers[..on_chip_tiers]
        .iter()
        .map(|t| t.aggregate_capacity())
        .sum();

    let mut remaining = [totals.weight, totals.kv, totals.activation];
    let mut on_chip = [0.0f64; 3];
    let mut pool = on_chip_capacity;

    // Stationary operand first.
    let (pin_class, pin_bytes) = pinned;
    let k = pin_class.index();
    let take = pin_bytes.min(remaining[k]).min(pool).max(0.0);
    on_chip[k] += take;
    remaining[k] -= take;
    pool -= take;

    // Storage priority.
    if priority == StoragePriority::Equal {
        let want: f64 = remaining.iter().sum();
        if want > 0.0 && pool > 0.0 {
            let share = (pool / want).min(1.0);
            for c in 0..3 {
                let take = remaining[c] * share;
                on_chip[c] += take;
                remaining[c] -= take;
            }
            pool = (pool - want * share).max(0.0);
        }
    }
    for class in fill_order(priority) {
        let c = class.index();
        let take = remaining[c].min(pool);
        on_chip[c] += take;
        remaining[c] -= take;
        pool -= take;
    }

    let mut bytes = vec![[0.0f64; 3]; levels];
    if on_chip_capacity > 0.0 {
        for (tier, slot) in hierarchy.tiers[..on_chip_tiers].iter().zip(bytes.iter_mut()) {
            let share = tier.aggregate_capacity() / on_chip_capacity;
            for c in 0..3 {
                slot[c] = on_chip[c] * share;
            }
        }
    }

    // Residual bytes fill off-chip tiers outward.
    let order = fill_order(priority);
    for (tier, slot) in hierarchy.tiers.iter().zip(bytes.iter_mut()).skip(on_chip_tiers) {
        let mut free = tier.aggregate_capacity();
        for class in &order {
            let c = class.index();
            let take = remaining[c].min(free);
            slot[c] += take;
            remaining[c] -= take;
            free -= take;
        }
    }
    let leftover: f64 = remaining.iter().sum();
    if leftover > required * 1e-12 + 1.0 {
        // On-chip tiers after an off-chip tier are not part of the pool.
        return Err(WorkloadError::CapacityExceeded {
            required,
            available: required - leftover,
            shortfall: leftover,
        });
    }
    Ok(Placement { totals, bytes })
}

/// Re-read factors of one GEMM's operands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GemmFolds {
    pub weight: f64,
    pub input: f64,
    /// Output writes (one per K fold under WS/IS).
    pub output_writes: f64,
    /// Partial-sum re-reads.
    pub output_reads: f64,
}

fn ceil_div(a: f64, b: f64) -> f64 {
    (a / b).ceil().max(1.0)
}

pub fn gemm_folds(m: f64, k: f64, n: f64, compute: &ComputeSpec, dataflow: Dataflow) -> GemmFolds {
    let rows = f64::from(compute.pe_rows);
    let cols = f64::from(compute.pe_cols);
    match dataflow {
        Dataflow::WS => {
            let kf = ceil_div(k, rows);
            GemmFolds {
                weight: 1.0,
                input: ceil_div(n, cols),
                output_writes: kf,
                output_reads: kf - 1.0,
            }
        }
        Dataflow::IS => {
            let kf = ceil_div(k, rows);
            GemmFolds {
                weight: ceil_div(m, cols),
                input: 1.0,
                output_writes: kf,
                output_reads: kf - 1.0,
            }
        }
        Dataflow::OS => GemmFolds {
            weight: ceil_div(m, rows),
            input: ceil_div(n, cols),
            output_writes: 1.0,
            output_reads: 0.0,
        },
    }
}

struct Gemm {
    name: &'static str,
    m: f64,
    k: f64,
    n: f64,
    /// Distinct weight matrices of this shape touched (experts); 1 for dense.
    copies: f64,
    /// Rows routed to each copy.
    m_per_copy: f64,
}

fn push_gemm(
    work: &mut LayerWork,
    g: &Gemm,
    compute: &ComputeSpec,
    dataflow: Dataflow,
    precision: &PrecisionConfig,
) {
    let folds = gemm_folds(g.m_per_copy, g.k, g.n, compute, dataflow);
    let w = g.k * g.n * precision.weight_bytes() * g.copies;
    let x = g.m * g.k * precision.activation_bytes();
    let y = g.m * g.n * precision.activation_bytes();
    work.macs += g.m * g.k * g.n;
    let mut push = |class, direction, bytes: f64| {
        if bytes > 0.0 {
            work.operands.push(OperandTraffic {
                name: g.name,
                class,
                stream: StreamKind::Matrix,
                direction,
                bytes,
            });
        }
    };
    push(DataClass::Weight, Direction::Read, w * folds.weight);
    push(DataClass::Activation, Direction::Read, x * folds.input);
    push(DataClass::Activation, Direction::Write, y * folds.output_writes);
    push(DataClass::Activation, Direction::Read, y * folds.output_reads);
}

fn push_vector(work: &mut LayerWork, name: &'static str, ops: f64, read: f64, write: f64) {
    work.vector_ops += ops;
    for (direction, bytes) in [(Direction::Read, read), (Direction::Write, write)] {
        if bytes > 0.0 {
            work.operands.push(OperandTraffic {
                name,
                class: DataClass::Activation,
                stream: StreamKind::Vector,
                direction,
                bytes,
            });
        }
    }
}

/// Work of one attention block and one FFN block for `batch` sequences.
pub fn layer_work(
    model: &ModelSpec,
    precision: &PrecisionConfig,
    compute: &ComputeSpec,
    dataflow: Dataflow,
    phase: Phase,
    batch: u64,
) -> [LayerWork; 2] {
    let b = batch as f64;
    let d = model.hidden_dim as f64;
    let h = model.num_heads as f64;
    let hd = model.head_dim as f64;
    let kvh = model.num_kv_heads as f64;
    let ab = precision.activation_bytes();
    let kvb = precision.kv_bytes();
    let rows = f64::from(compute.pe_rows);

    let (n, ctx_reads, causal_pairs, new_kv) = match phase {
        Phase::Prefill { tokens } => {
            let t = tokens as f64;
            // Each query block streams the keys before it: on average
            // half of the K/V blocks, (q_blocks + 1) / 2 full sweeps.
            let q_blocks = ceil_div(t, rows);
            (t, t * (q_blocks + 1.0) / 2.0, t * (t + 1.0) / 2.0, t)
        }
        Phase::Decode { context } => {
            let c = context as f64;
            (1.0, c, c, 1.0)
        }
    };
    let m = b * n;

    let mut attn = LayerWork {
        kind: LayerKind::Attention,
        macs: 0.0,
        vector_ops: 0.0,
        operands: Vec::new(),
    };
    push_vector(&mut attn, "norm", NORM_OPS * m * d, m * d * ab, m * d * ab);
    let qkv = Gemm {
        name: "qkv",
        m,
        k: d,
        n: model.qkv_dim() as f64,
        copies: 1.0,
        m_per_copy: m,
    };
    push_gemm(&mut attn, &qkv, compute, dataflow, precision);
    push_vector(&mut attn, "rope", ROPE_OPS * m * (h + kvh) * hd, 0.0, 0.0);

    // Streamed attention: K/V reads and new K/V writes in the KV class.
    let kv_row = 2.0 * kvh * hd * kvb;
    attn.macs += b * 2.0 * h * hd * causal_pairs;
    attn.vector_ops += b * SOFTMAX_OPS * h * causal_pairs;
    let attn_ops = [
        ("kv-read", DataClass::Kv, Direction::Read, b * kv_row * ctx_reads),
        ("kv-write", DataClass::Kv, Direction::Write, b * kv_row * new_kv),
        ("query", DataClass::Activation, Direction::Read, m * h * hd * ab),
        ("context", DataClass::Activation, Direction::Write, m * h * hd * ab),
    ];
    for (name, class, direction, bytes) in attn_ops {
        attn.operands.push(OperandTraffic {
            name,
            class,
            stream: StreamKind::Matrix,
            direction,
            bytes,
        });
    }
    let o_proj = Gemm {
        name: "o-proj",
        m,
        k: h * hd,
        n: d,
        copies: 1.0,
        m_per_copy: m,
    };
    push_gemm(&mut attn, &o_proj, compute, dataflow, precision);
    push_vector(&mut attn, "residual", m * d, 2.0 * m * d * ab, m * d * ab);

    let mut ffn = LayerWork {
        kind: LayerKind::Ffn,
        macs: 0.0,
        vector_ops: 0.0,
        operands: Vec::new(),
    };
    push_vector(&mut ffn, "norm", NORM_OPS * m * d, m * d * ab, m * d * ab);
    let (routed, width, copies) = match &model.moe {
        Some(moe) => {
            let experts = f64::from(moe.num_experts);
            let k = f64::from(moe.experts_per_token);
            let expert_params = model.active_ffn_params_per_layer() / k;
            // Expected number of distinct experts hit by m tokens.
            let touched = experts * (1.0 - (1.0 - k / experts).powf(m));
            (m * k, expert_params / (3.0 * d), touched.max(1.0))
        }
        None => (m, model.ffn_dim as f64, 1.0),
    };
    let gate_up = Gemm {
        name: "gate-up",
        m: routed,
        k: d,
        n: 2.0 * width,
        copies,
        m_per_copy: routed / copies,
    };
    push_gemm(&mut ffn, &gate_up, compute, dataflow, precision);
    push_vector(
        &mut ffn,
        "gated-act",
        GATED_ACT_OPS * routed * width,
        2.0 * routed * width * ab,
        routed * width * ab,
    );
    let down = Gemm {
        name: "down",
        m: routed,
        k: width,
        n: d,
        copies,
        m_per_copy: routed / copies,
    };
    push_gemm(&mut ffn, &down, compute, dataflow, precision);
    push_vector(&mut ffn, "residual", m * d, 2.0 * m * d * ab, m * d * ab);

    [attn, ffn]
}

/// Bytes the stationary operand pins on-chip: the largest single block's
/// worth of that operand.
pub fn pinned_bytes(work: &[LayerWork; 2], model: &ModelSpec, precision: &PrecisionConfig, dataflow: Dataflow) -> f64 {
    match stationary_class(dataflow) {
        DataClass::Weight => {
            let attn = model.attention_params_per_layer();
            let ffn = model.active_ffn_params_per_layer();
            attn.max(ffn) * precision.weight_bytes()
        }
        _ => work
            .iter()
            .flat_map(|w| w.operands.iter())
            .filter(|o| o.class == DataClass::Activation && o.stream == StreamKind::Matrix)
            .map(|o| o.bytes)
            .fold(0.0, f64::max)
            .min(
                work.iter()
                    .map(|w| w.class_bytes(DataClass::Activation))
                    .fold(0.0, f64::max),
            ),
    }
}

/// One operand turned into a transfer over the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRequest {
    pub name: &'static str,
    pub class: DataClass,
    pub stream: StreamKind,
    pub direction: Direction,
    pub request: TransferRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTraffic {
    pub kind: LayerKind,
    pub macs: f64,
    pub vector_ops: f64,
    pub requests: Vec<StreamRequest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficPlan {
    pub placement: Placement,
    pub layers: Vec<LayerTraffic>,
}

/// Resident bytes per class for a step of `phase` with `batch` sequences.
/// `kv_tokens` is the number of cached tokens per sequence to provision.
pub fn class_totals(
    model: &ModelSpec,
    precision: &PrecisionConfig,
    phase: Phase,
    kv_tokens: u64,
    batch: u64,
) -> ClassBytes {
    let b = batch as f64;
    let step_tokens = match phase {
        Phase::Prefill { tokens } => tokens as f64,
        Phase::Decode { .. } => 1.0,
    };
    ClassBytes {
        weight: model.storage_params() * precision.weight_bytes(),
        kv: model.kv_bytes_per_token(precision) * kv_tokens as f64 * b,
        activation: model.peak_activation_width() * step_tokens * precision.activation_bytes() * b,
    }
}

/// Places data and emits the per-layer transfer requests of one step.
#[allow(clippy::too_many_arguments)]
pub fn stage_traffic(
    model: &ModelSpec,
    precision: &PrecisionConfig,
    strategy: &SoftwareStrategy,
    hierarchy: &HierarchySpec,
    compute: &ComputeSpec,
    phase: Phase,
    kv_tokens: u64,
    batch: u64,
) -> Result<TrafficPlan, WorkloadError> {
    let work = layer_work(model, precision, compute, strategy.dataflow, phase, batch);
    let totals = class_totals(model, precision, phase, kv_tokens, batch);
    let pinned = (
        stationary_class(strategy.dataflow),
        pinned_bytes(&work, model, precision, strategy.dataflow),
    );
    let placement = place_classes(totals, pinned, strategy.storage_priority, hierarchy)?;
    let alphas: Vec<Vec<f64>> = DataClass::ALL.iter().map(|c| placement.alpha(*c)).collect();
    let layers = work
        .into_iter()
        .map(|w| {
            let requests = w
                .operands
                .iter()
                .map(|o| {
                    let request = TransferRequest::new(o.bytes, alphas[o.class.index()].clone())
                        .map_err(|e: HierarchyError| WorkloadError::Invalid(e.to_string()))?;
                    Ok(StreamRequest {
                        name: o.name,
                        class: o.class,
                        stream: o.stream,
                        direction: o.direction,
                        request,
                    })
                })
                .collect::<Result<Vec<_>, WorkloadError>>()?;
            Ok(LayerTraffic {
                kind: w.kind,
                macs: w.macs,
                vector_ops: w.vector_ops,
                requests,
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;
    Ok(TrafficPlan { placement, layers })
}
