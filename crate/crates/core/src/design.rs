//! Design-point description: compute array, memory hierarchy, numeric
//! precision and software strategy, plus the on-disk design file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    validate_hierarchy, Catalog, CatalogError, FeasibilityReport, Mode, ShorelineBudget,
};
use crate::hierarchy::{HierarchyError, HierarchySpec, TierInstance};
use crate::power::ComputePowerModel;

/// PE array shapes accepted in constrained mode.
pub const PE_SHAPES: [(u32, u32); 9] = [
    (128, 128),
    (64, 256),
    (32, 512),
    (16, 1024),
    (1024, 64),
    (2048, 64),
    (2048, 128),
    (1024, 512),
    (2048, 256),
];

/// Largest PE array accepted in constrained mode.
pub const MAX_PE_COUNT: u64 = 2048 * 256;

pub const VLEN_CHOICES: [u32; 5] = [128, 256, 512, 1024, 2048];

pub const DEFAULT_CLOCK_HZ: f64 = 1e9;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("design parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid design: {0}")]
    Invalid(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeSpec {
    pub pe_rows: u32,
    pub pe_cols: u32,
    pub vlen: u32,
    #[serde(default = "default_clock", alias = "clock")]
    pub clock_hz: f64,
}

fn default_clock() -> f64 {
    DEFAULT_CLOCK_HZ
}

impl ComputeSpec {
    pub fn new(pe_rows: u32, pe_cols: u32, vlen: u32) -> Self {
        ComputeSpec {
            pe_rows,
            pe_cols,
            vlen,
            clock_hz: DEFAULT_CLOCK_HZ,
        }
    }

    pub fn pe_count(&self) -> u64 {
        u64::from(self.pe_rows) * u64::from(self.pe_cols)
    }

    /// Multiply-accumulates per second at full matrix-unit utilization.
    pub fn peak_macs(&self) -> f64 {
        self.pe_count() as f64 * self.clock_hz
    }

    /// Element operations per second at full vector-unit utilization.
    pub fn peak_vector_ops(&self) -> f64 {
        f64::from(self.vlen) * self.clock_hz
    }

    pub fn check(&self, mode: Mode) -> Result<(), String> {
        if self.pe_rows == 0 || self.pe_cols == 0 || self.vlen == 0 {
            return Err("PE dimensions and VLEN must be positive".into());
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(format!("clock must be positive, got {}", self.clock_hz));
        }
        if mode == Mode::Constrained {
            if !PE_SHAPES.contains(&(self.pe_rows, self.pe_cols)) {
                return Err(format!(
                    "PE array {}x{} is not an allowed shape",
                    self.pe_rows, self.pe_cols
                ));
            }
            if self.pe_count() > MAX_PE_COUNT {
                return Err(format!("PE array {}x{} exceeds 2048x256", self.pe_rows, self.pe_cols));
            }
            if !VLEN_CHOICES.contains(&self.vlen) {
                return Err(format!("VLEN {} is not an allowed width", self.vlen));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ComputeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} / VLEN {}", self.pe_rows, self.pe_cols, self.vlen)
    }
}

/// Bits per element for weights, activations and the KV cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionConfig {
    #[serde(alias = "w")]
    pub weight_bits: u32,
    #[serde(alias = "a")]
    pub activation_bits: u32,
    #[serde(alias = "kv")]
    pub kv_bits: u32,
}

impl PrecisionConfig {
    pub const fn uniform(bits: u32) -> Self {
        PrecisionConfig {
            weight_bits: bits,
            activation_bits: bits,
            kv_bits: bits,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        for (name, bits) in [
            ("weight_bits", self.weight_bits),
            ("activation_bits", self.activation_bits),
            ("kv_bits", self.kv_bits),
        ] {
            if ![4, 8, 16].contains(&bits) {
                return Err(format!("{name} must be 4, 8 or 16, got {bits}"));
            }
        }
        Ok(())
    }

    pub fn weight_bytes(&self) -> f64 {
        f64::from(self.weight_bits) / 8.0
    }

    pub fn activation_bytes(&self) -> f64 {
        f64::from(self.activation_bits) / 8.0
    }

    pub fn kv_bytes(&self) -> f64 {
        f64::from(self.kv_bits) / 8.0
    }
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig::uniform(8)
    }
}

impl fmt::Display for PrecisionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.weight_bits, self.activation_bits, self.kv_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataflow {
    WS,
    IS,
    OS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StoragePriority {
    #[serde(alias = "Act")]
    Activation,
    #[serde(alias = "KV")]
    KVCache,
    Weight,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BwPriority {
    Matrix,
    Vector,
    Equal,
}

impl BwPriority {
    /// Share of every boundary's effective bandwidth given to the matrix
    /// stream; the vector stream receives the rest.
    pub fn matrix_share(self) -> f64 {
        match self {
            BwPriority::Matrix => 0.75,
            BwPriority::Vector => 0.25,
            BwPriority::Equal => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftwareStrategy {
    pub dataflow: Dataflow,
    pub storage_priority: StoragePriority,
    pub bw_priority: BwPriority,
}

impl Default for SoftwareStrategy {
    fn default() -> Self {
        SoftwareStrategy {
            dataflow: Dataflow::WS,
            storage_priority: StoragePriority::Equal,
            bw_priority: BwPriority::Equal,
        }
    }
}

impl fmt::Display for SoftwareStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}/{:?}/{:?}",
            self.storage_priority, self.dataflow, self.bw_priority
        )
    }
}

/// One complete accelerator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub name: Option<String>,
    pub compute: ComputeSpec,
    pub hierarchy: HierarchySpec,
    pub precision: PrecisionConfig,
    pub strategy: SoftwareStrategy,
    pub compute_power: ComputePowerModel,
    pub mode: Mode,
}

impl DesignPoint {
    /// Structural feasibility: compute domains, precision domains and the
    /// hierarchy's shoreline / ordering rules.
    pub fn feasibility(&self, catalog: &Catalog, budget: &ShorelineBudget) -> DesignFeasibility {
        let mut problems = Vec::new();
        if let Err(e) = self.compute.check(self.mode) {
            problems.push(e);
        }
        if let Err(e) = self.precision.check() {
            problems.push(e);
        }
        let hierarchy = validate_hierarchy(&self.hierarchy, catalog, budget, self.mode);
        DesignFeasibility {
            feasible: problems.is_empty() && hierarchy.feasible,
            problems,
            hierarchy,
        }
    }

    pub fn to_file(&self) -> DesignFile {
        DesignFile {
            name: self.name.clone(),
            compute: self.compute,
            hierarchy: self
                .hierarchy
                .tiers
                .iter()
                .map(|t| TierEntry {
                    tech: t.tech.name.clone(),
                    units: t.units,
                })
                .collect(),
            precision: Some(self.precision),
            strategy: self.strategy,
            compute_power: Some(self.compute_power),
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignFeasibility {
    pub feasible: bool,
    pub problems: Vec<String>,
    pub hierarchy: FeasibilityReport,
}

impl DesignFeasibility {
    pub fn summary(&self) -> String {
        let mut parts = self.problems.clone();
        if !self.hierarchy.feasible {
            parts.push(self.hierarchy.summary());
        }
        if parts.is_empty() {
            "feasible".into()
        } else {
            parts.join("; ")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierEntry {
    pub tech: String,
    pub units: u32,
}

/// `design.json` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub compute: ComputeSpec,
    pub hierarchy: Vec<TierEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<PrecisionConfig>,
    pub strategy: SoftwareStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_power: Option<ComputePowerModel>,
    #[serde(default)]
    pub mode: Mode,
}

impl DesignFile {
    pub fn from_json_str(source: &str) -> Result<Self, DesignError> {
        let de = &mut serde_json::Deserializer::from_str(source);
        serde_path_to_error::deserialize(de).map_err(|e| DesignError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DesignError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DesignError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Resolves technology names against the catalog. `fallback_precision`
    /// is used when the file does not pin one.
    pub fn resolve(
        &self,
        catalog: &Catalog,
        fallback_precision: Option<PrecisionConfig>,
    ) -> Result<DesignPoint, DesignError> {
        let tiers = self
            .hierarchy
            .iter()
            .map(|entry| {
                let tech = catalog.get(&entry.tech)?.clone();
                Ok(TierInstance::new(tech, entry.units)?)
            })
            .collect::<Result<Vec<_>, DesignError>>()?;
        let precision = self
            .precision
            .or(fallback_precision)
            .unwrap_or_default();
        precision.check().map_err(DesignError::Invalid)?;
        let compute_power = self.compute_power.unwrap_or_default();
        compute_power.check().map_err(DesignError::Invalid)?;
        Ok(DesignPoint {
            name: self.name.clone(),
            compute: self.compute,
            hierarchy: HierarchySpec::new(tiers)?,
            precision,
            strategy: self.strategy,
            compute_power,
            mode: self.mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P1: &str = r#"{
        "name": "P1",
        "compute": {"pe_rows": 2048, "pe_cols": 256, "vlen": 2048},
        "hierarchy": [{"tech": "SRAM3D", "units": 3}, {"tech": "HBM4", "units": 2}, {"tech": "HBF", "units": 1}],
        "precision": {"w": 8, "a": 8, "kv": 8},
        "strategy": {"dataflow": "WS", "storage_priority": "Activation", "bw_priority": "Matrix"}
    }"#;

    #[test]
    fn parses_and_resolves() {
        let catalog = Catalog::bundled();
        let file = DesignFile::from_json_str(P1).unwrap();
        let design = file.resolve(&catalog, None).unwrap();
        assert_eq!(design.compute.pe_count(), 2048 * 256);
        assert_eq!(design.compute.clock_hz, 1e9);
        assert_eq!(design.hierarchy.len(), 3);
        assert_eq!(design.mode, Mode::Constrained);
        assert!(design.feasibility(&catalog, &ShorelineBudget::default()).feasible);
        let round = design.to_file();
        assert_eq!(round.resolve(&catalog, None).unwrap(), design);
    }

    #[test]
    fn unknown_field_is_named() {
        let bad = P1.replace("\"vlen\"", "\"vlenn\"");
        let err = DesignFile::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("compute"), "{err}");
    }

    #[test]
    fn unknown_technology_is_rejected() {
        let bad = P1.replace("HBF", "HBX");
        let file = DesignFile::from_json_str(&bad).unwrap();
        assert!(matches!(
            file.resolve(&Catalog::bundled(), None),
            Err(DesignError::Catalog(CatalogError::UnknownTechnology(_)))
        ));
    }

    #[test]
    fn compute_domains() {
        assert!(ComputeSpec::new(2048, 128, 2048).check(Mode::Constrained).is_ok());
        assert!(ComputeSpec::new(100, 100, 2048).check(Mode::Constrained).is_err());
        assert!(ComputeSpec::new(100, 100, 2048).check(Mode::Unconstrained).is_ok());
        assert!(ComputeSpec::new(2048, 128, 3000).check(Mode::Constrained).is_err());
    }

    #[test]
    fn bandwidth_split() {
        assert_eq!(BwPriority::Matrix.matrix_share() * 2e12, 1.5e12);
        assert_eq!((1.0 - BwPriority::Matrix.matrix_share()) * 2e12, 0.5e12);
        assert_eq!(BwPriority::Equal.matrix_share(), 0.5);
    }
}
