//! Analytical models for co-designing NPU memory hierarchies for LLM
//! inference: a memory technology catalog with shoreline limits, a
//! double-buffered hierarchical transfer model with a discrete-event
//! oracle, memory and compute power, workload footprints and traffic, and
//! per-stage throughput/energy evaluation.

pub mod catalog;
pub mod hierarchy;
pub mod oracle;
pub mod design;
pub mod evaluator;
pub mod power;
pub mod presets;
pub mod traffic;
pub mod workload;

pub use catalog::{Catalog, MemoryKind, MemoryTechnology, Mode, ShorelineBudget};
pub use design::{
    BwPriority, ComputeSpec, Dataflow, DesignFile, DesignPoint, PrecisionConfig, SoftwareStrategy,
    StoragePriority,
};
pub use evaluator::{eval_decode, eval_prefill, StageResult};
pub use hierarchy::{HierarchySpec, TierInstance, TransferRequest};
pub use power::{ComputePowerModel, PowerReport};
pub use workload::{ModelSpec, Stage, Workload, WorkloadFile, WorkloadTrace};
