//! Model shapes, inference traces and tensor footprints.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::PrecisionConfig;
use crate::hierarchy::HierarchySpec;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("workload parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error(
        "capacity exceeded: {required:.4e} B required, {available:.4e} B available \
         (short by {shortfall:.4e} B)"
    )]
    CapacityExceeded {
        required: f64,
        available: f64,
        shortfall: f64,
    },
    #[error("trace has no tokens; KV footprint per sequence is zero")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoeSpec {
    pub total_params: f64,
    pub active_params_per_token: f64,
    pub num_experts: u32,
    pub experts_per_token: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub num_layers: u32,
    pub hidden_dim: u64,
    pub num_heads: u64,
    pub num_kv_heads: u64,
    pub head_dim: u64,
    /// Dense FFN width, or per-expert width for MoE models.
    pub ffn_dim: u64,
    pub vocab_size: u64,
    #[serde(default)]
    pub tie_embeddings: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moe: Option<MoeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_steps: Option<u32>,
}

impl ModelSpec {
    pub fn check(&self) -> Result<(), WorkloadError> {
        let invalid = |m: String| Err(WorkloadError::Invalid(m));
        if self.hidden_dim == 0 || self.num_heads == 0 || self.head_dim == 0 {
            return invalid("hidden_dim, num_heads and head_dim must be positive".into());
        }
        if self.num_kv_heads == 0 || self.num_heads % self.num_kv_heads != 0 {
            return invalid(format!(
                "num_kv_heads ({}) must divide num_heads ({})",
                self.num_kv_heads, self.num_heads
            ));
        }
        if let Some(moe) = &self.moe {
            if !(moe.active_params_per_token > 0.0 && moe.total_params > 0.0) {
                return invalid("MoE parameter counts must be positive".into());
            }
            if moe.active_params_per_token > moe.total_params {
                return invalid("MoE active parameters exceed total parameters".into());
            }
            if moe.experts_per_token == 0 || moe.experts_per_token > moe.num_experts {
                return invalid("experts_per_token must lie in 1..=num_experts".into());
            }
        }
        if self.diffusion_steps == Some(0) {
            return invalid("diffusion_steps must be positive".into());
        }
        Ok(())
    }

    /// Width of the concatenated Q/K/V projection.
    pub fn qkv_dim(&self) -> u64 {
        (self.num_heads + 2 * self.num_kv_heads) * self.head_dim
    }

    pub fn attention_params_per_layer(&self) -> f64 {
        let d = self.hidden_dim as f64;
        d * self.qkv_dim() as f64 + (self.num_heads * self.head_dim) as f64 * d
    }

    pub fn embedding_params(&self) -> f64 {
        let copies = if self.tie_embeddings { 1.0 } else { 2.0 };
        (self.vocab_size * self.hidden_dim) as f64 * copies
    }

    /// Gated FFN (gate, up, down) parameters of one dense layer.
    pub fn dense_ffn_params_per_layer(&self) -> f64 {
        3.0 * (self.hidden_dim * self.ffn_dim) as f64
    }

    /// Parameter count implied by the layer shapes.
    pub fn shape_param_count(&self) -> f64 {
        f64::from(self.num_layers)
            * (self.attention_params_per_layer() + self.dense_ffn_params_per_layer())
            + self.embedding_params()
    }

    /// Parameters that must be stored.
    pub fn storage_params(&self) -> f64 {
        match &self.moe {
            Some(moe) => moe.total_params,
            None => self.shape_param_count(),
        }
    }

    /// Parameters touched by one token.
    pub fn active_params(&self) -> f64 {
        match &self.moe {
            Some(moe) => moe.active_params_per_token,
            None => self.shape_param_count(),
        }
    }

    /// FFN parameters one token touches in one layer (all selected experts).
    pub fn active_ffn_params_per_layer(&self) -> f64 {
        match &self.moe {
            Some(moe) => {
                let layers = f64::from(self.num_layers.max(1));
                let shared = layers * self.attention_params_per_layer() + self.embedding_params();
                ((moe.active_params_per_token - shared) / layers).max(0.0)
            }
            None => self.dense_ffn_params_per_layer(),
        }
    }

    /// KV-cache bytes one token adds across all layers.
    pub fn kv_bytes_per_token(&self, precision: &PrecisionConfig) -> f64 {
        2.0 * f64::from(self.num_layers)
            * (self.num_kv_heads * self.head_dim) as f64
            * precision.kv_bytes()
    }

    /// Widest per-layer intermediate per token: the QKV output or the
    /// gate/up FFN output (all selected experts for MoE).
    pub fn peak_activation_width(&self) -> f64 {
        let ffn_width = match &self.moe {
            Some(moe) => 2.0 * self.ffn_dim as f64 * f64::from(moe.experts_per_token),
            None => 2.0 * self.ffn_dim as f64,
        };
        (self.qkv_dim() as f64).max(ffn_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[serde(alias = "Prefill")]
    Prefill,
    #[serde(alias = "Decode")]
    Decode,
    #[default]
    #[serde(alias = "Combined")]
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadTrace {
    pub prompt_tokens: u64,
    pub generated_tokens: u64,
    #[serde(default)]
    pub stage: Stage,
}

impl WorkloadTrace {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.generated_tokens
    }

    pub fn check(&self) -> Result<(), WorkloadError> {
        if self.stage == Stage::Prefill && self.prompt_tokens == 0 {
            return Err(WorkloadError::Invalid(
                "a prefill trace needs at least one prompt token".into(),
            ));
        }
        Ok(())
    }
}

/// Model plus trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub model: ModelSpec,
    pub trace: WorkloadTrace,
}

/// `workload.json` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub model: ModelSpec,
    pub trace: WorkloadTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<PrecisionConfig>,
}

impl WorkloadFile {
    pub fn from_json_str(source: &str) -> Result<Self, WorkloadError> {
        let de = &mut serde_json::Deserializer::from_str(source);
        let file: WorkloadFile =
            serde_path_to_error::deserialize(de).map_err(|e| WorkloadError::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        file.model.check()?;
        file.trace.check()?;
        if let Some(p) = &file.precision {
            p.check().map_err(WorkloadError::Invalid)?;
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn workload(&self) -> Workload {
        Workload {
            model: self.model.clone(),
            trace: self.trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprints {
    pub weights_bytes: f64,
    pub kv_bytes_per_seq: f64,
    /// Largest single-layer activation working set for the batch.
    pub act_bytes_peak: f64,
    /// Per-layer hidden states for every token of the batch.
    pub act_bytes_stored: f64,
    pub total_bytes: f64,
}

pub fn tensor_footprints(
    model: &ModelSpec,
    precision: &PrecisionConfig,
    trace: &WorkloadTrace,
    batch: u64,
) -> Footprints {
    let tokens = trace.total_tokens() as f64;
    let b = batch as f64;
    let weights_bytes = model.storage_params() * precision.weight_bytes();
    let kv_bytes_per_seq = model.kv_bytes_per_token(precision) * tokens;
    let act_bytes_peak = model.peak_activation_width() * tokens * precision.activation_bytes() * b;
    let act_bytes_stored = f64::from(model.num_layers)
        * model.hidden_dim as f64
        * tokens
        * precision.activation_bytes()
        * b;
    Footprints {
        weights_bytes,
        kv_bytes_per_seq,
        act_bytes_peak,
        act_bytes_stored,
        total_bytes: weights_bytes + kv_bytes_per_seq * b + act_bytes_stored,
    }
}

/// Largest decode batch whose KV cache fits beside the weights, counting
/// every tier (on-chip included).
pub fn decode_max_batch(
    model: &ModelSpec,
    precision: &PrecisionConfig,
    trace: &WorkloadTrace,
    hierarchy: &HierarchySpec,
) -> Result<u64, WorkloadError> {
    let fp = tensor_footprints(model, precision, trace, 1);
    let capacity = hierarchy.total_capacity();
    if fp.weights_bytes > capacity {
        return Err(WorkloadError::CapacityExceeded {
            required: fp.weights_bytes,
            available: capacity,
            shortfall: fp.weights_bytes - capacity,
        });
    }
    if fp.kv_bytes_per_seq <= 0.0 {
        return Err(WorkloadError::EmptyTrace);
    }
    Ok(((capacity - fp.weights_bytes) / fp.kv_bytes_per_seq).floor() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    Dense,
    Moe,
    Diffusion,
}

/// How a stage maps onto forward passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassPlan {
    pub flavor: Flavor,
    /// Full forward passes.
    pub passes: u64,
    /// Tokens per sequence processed in each pass.
    pub tokens_per_pass: u64,
    pub storage_params: f64,
    pub active_params_per_token: f64,
}

/// Prefill-side pass structure. Diffusion models re-run the whole
/// sequence once per denoising step; MoE models store all experts but touch
/// only the active subset per token.
pub fn expand_workload_flavor(model: &ModelSpec, trace: &WorkloadTrace) -> PassPlan {
    let (flavor, passes, tokens) = match (model.diffusion_steps, &model.moe) {
        (Some(steps), _) => (Flavor::Diffusion, u64::from(steps), trace.total_tokens()),
        (None, Some(_)) => (Flavor::Moe, 1, trace.prompt_tokens),
        (None, None) => (Flavor::Dense, 1, trace.prompt_tokens),
    };
    PassPlan {
        flavor,
        passes,
        tokens_per_pass: tokens,
        storage_params: model.storage_params(),
        active_params_per_token: model.active_params(),
    }
}
