//! Memory technology registry and physical integration limits.
//!
//! The bundled catalog stores values in datasheet units (ns, GB, GB/s, mm,
//! mW/GB, pJ/bit). Everything is converted to SI on load so downstream
//! models work in bytes, seconds, watts and joules.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::HierarchySpec;

/// Bytes per (decimal) gigabyte.
pub const GB: f64 = 1e9;

/// Reticle-limited memory edge: two 33 mm die edges.
pub const MAX_MEMORY_EDGE_MM: f64 = 66.0;

/// Off-chip tiers allowed in constrained mode (L1..L3).
pub const MAX_OFF_CHIP_TIERS: usize = 3;

const DEFAULT_CATALOG: &str = include_str!("../data/catalog.json");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid catalog entry `{entry}`: field `{field}` {reason}")]
    Invalid {
        entry: String,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate catalog entry `{0}`")]
    Duplicate(String),
    #[error("unknown memory technology `{0}`")]
    UnknownTechnology(String),
    #[error("`{0}` is on-chip and does not consume die shoreline")]
    OnChipShoreline(String),
    #[error("invalid shoreline budget: {0}")]
    Budget(String),
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MemoryKind {
    OnChip,
    OffChip,
}

/// One row of the technology table, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryTechnology {
    pub name: String,
    pub kind: MemoryKind,
    /// Seconds per access.
    pub latency: f64,
    /// Bytes per stack / package / die / layer.
    pub capacity_per_unit: f64,
    /// Bytes per second per unit.
    pub bandwidth_per_unit: f64,
    /// Millimetres of die edge per unit; `None` for on-chip memory.
    pub shoreline_per_unit: Option<f64>,
    /// Background power in watts per gigabyte of installed capacity.
    pub p_bg: f64,
    /// Joules per bit read.
    pub e_read: f64,
    /// Joules per bit written.
    pub e_write: f64,
}

/// On-disk representation (datasheet units).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyRecord {
    pub name: String,
    pub kind: MemoryKind,
    /// ns
    pub latency: f64,
    /// GB
    pub capacity_per_unit: f64,
    /// GB/s
    pub bandwidth_per_unit: f64,
    /// mm
    #[serde(default)]
    pub shoreline_per_unit: Option<f64>,
    /// mW/GB
    pub p_bg: f64,
    /// pJ/bit
    pub e_read: f64,
    /// pJ/bit
    pub e_write: f64,
}

impl TechnologyRecord {
    fn into_technology(self) -> Result<MemoryTechnology, CatalogError> {
        let invalid = |field: &'static str, reason: &str| CatalogError::Invalid {
            entry: self.name.clone(),
            field,
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let positive = [
            ("latency", self.latency),
            ("capacity_per_unit", self.capacity_per_unit),
            ("bandwidth_per_unit", self.bandwidth_per_unit),
            ("p_bg", self.p_bg),
            ("e_read", self.e_read),
            ("e_write", self.e_write),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(field, &format!("must be positive and finite, got {value}")));
            }
        }
        match (self.kind, self.shoreline_per_unit) {
            (MemoryKind::OnChip, Some(_)) => {
                return Err(invalid("shoreline_per_unit", "must be absent for on-chip memory"))
            }
            (MemoryKind::OffChip, None) => {
                return Err(invalid("shoreline_per_unit", "is required for off-chip memory"))
            }
            (MemoryKind::OffChip, Some(mm)) if !(mm.is_finite() && mm > 0.0) => {
                return Err(invalid("shoreline_per_unit", &format!("must be positive, got {mm}")))
            }
            _ => {}
        }
        Ok(MemoryTechnology {
            name: self.name,
            kind: self.kind,
            latency: self.latency * 1e-9,
            capacity_per_unit: self.capacity_per_unit * GB,
            bandwidth_per_unit: self.bandwidth_per_unit * GB,
            shoreline_per_unit: self.shoreline_per_unit,
            p_bg: self.p_bg * 1e-3,
            e_read: self.e_read * 1e-12,
            e_write: self.e_write * 1e-12,
        })
    }
}

impl From<&MemoryTechnology> for TechnologyRecord {
    fn from(t: &MemoryTechnology) -> Self {
        TechnologyRecord {
            name: t.name.clone(),
            kind: t.kind,
            latency: t.latency * 1e9,
            capacity_per_unit: t.capacity_per_unit / GB,
            bandwidth_per_unit: t.bandwidth_per_unit / GB,
            shoreline_per_unit: t.shoreline_per_unit,
            p_bg: t.p_bg * 1e3,
            e_read: t.e_read * 1e12,
            e_write: t.e_write * 1e12,
        }
    }
}

impl MemoryTechnology {
    pub fn is_on_chip(&self) -> bool {
        self.kind == MemoryKind::OnChip
    }

    /// Unit counts accepted in constrained mode: 3D-stacked SRAM layers
    /// 1..=4 (zero layers means the tier is absent), a single conventional
    /// on-chip SRAM die, and {1, 2, 4, 8} for every off-chip family.
    pub fn allowed_units(&self) -> &'static [u32] {
        match (self.kind, self.name.as_str()) {
            (MemoryKind::OnChip, "SRAM3D") => &[1, 2, 3, 4],
            (MemoryKind::OnChip, _) => &[1],
            (MemoryKind::OffChip, _) => &[1, 2, 4, 8],
        }
    }
}

/// Immutable name → technology registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    entries: BTreeMap<String, MemoryTechnology>,
}

impl Catalog {
    /// The bundled technology table.
    pub fn bundled() -> Self {
        Self::from_json_str(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn from_json_str(source: &str) -> Result<Self, CatalogError> {
        let de = &mut serde_json::Deserializer::from_str(source);
        let records: Vec<TechnologyRecord> =
            serde_path_to_error::deserialize(de).map_err(|e| CatalogError::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        Self::from_records(records)
    }

    pub fn from_records(records: Vec<TechnologyRecord>) -> Result<Self, CatalogError> {
        let mut entries = BTreeMap::new();
        for record in records {
            let tech = record.into_technology()?;
            if entries.contains_key(&tech.name) {
                return Err(CatalogError::Duplicate(tech.name));
            }
            entries.insert(tech.name.clone(), tech);
        }
        Ok(Catalog { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn get(&self, name: &str) -> Result<&MemoryTechnology, CatalogError> {
        self.entries
            .get(name)
            .ok_or_else(|| CatalogError::UnknownTechnology(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryTechnology> {
        self.entries.values()
    }

    pub fn off_chip(&self) -> impl Iterator<Item = &MemoryTechnology> {
        self.iter().filter(|t| t.kind == MemoryKind::OffChip)
    }

    pub fn to_records(&self) -> Vec<TechnologyRecord> {
        self.iter().map(TechnologyRecord::from).collect()
    }
}

/// Die-edge length reserved for memory PHYs plus the per-stack margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShorelineBudget {
    pub l_mem: f64,
    pub l_margin: f64,
}

impl Default for ShorelineBudget {
    fn default() -> Self {
        ShorelineBudget {
            l_mem: MAX_MEMORY_EDGE_MM,
            l_margin: 1.0,
        }
    }
}

impl ShorelineBudget {
    pub fn new(l_mem: f64, l_margin: f64) -> Result<Self, CatalogError> {
        if !(l_mem > 0.0 && l_mem <= MAX_MEMORY_EDGE_MM) {
            return Err(CatalogError::Budget(format!(
                "l_mem must lie in (0, {MAX_MEMORY_EDGE_MM}] mm, got {l_mem}"
            )));
        }
        if !(l_margin >= 0.0 && l_margin.is_finite()) {
            return Err(CatalogError::Budget(format!(
                "l_margin must be non-negative, got {l_margin}"
            )));
        }
        Ok(ShorelineBudget { l_mem, l_margin })
    }

    /// Edge length one unit of `tech` occupies, margin included.
    pub fn footprint(&self, tech: &MemoryTechnology) -> Option<f64> {
        tech.shoreline_per_unit.map(|mm| mm + self.l_margin)
    }
}

/// Maximum number of units of an off-chip technology the memory edge can host.
pub fn max_stacks(tech: &MemoryTechnology, budget: &ShorelineBudget) -> Result<u32, CatalogError> {
    let per_unit = budget
        .footprint(tech)
        .ok_or_else(|| CatalogError::OnChipShoreline(tech.name.clone()))?;
    Ok((budget.l_mem / per_unit).floor() as u32)
}

/// Whether categorical domains (stack sets, tier count) are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Constrained,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyHierarchy,
    UnknownTechnology { tier: usize, tech: String },
    UnitsNotAllowed { tier: usize, tech: String, units: u32, allowed: Vec<u32> },
    ShorelineExceeded { used_mm: f64, budget_mm: f64 },
    OnChipAfterOffChip { tier: usize, tech: String },
    TooManyOffChipTiers { count: usize, max: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyHierarchy => write!(f, "hierarchy has no tiers"),
            Violation::UnknownTechnology { tier, tech } => {
                write!(f, "tier {tier}: `{tech}` is not in the catalog")
            }
            Violation::UnitsNotAllowed { tier, tech, units, allowed } => {
                write!(f, "tier {tier}: {tech}x{units} not in allowed unit set {allowed:?}")
            }
            Violation::ShorelineExceeded { used_mm, budget_mm } => write!(
                f,
                "off-chip shoreline {used_mm:.2} mm exceeds the {budget_mm:.2} mm memory edge \
                 (N_stack <= floor(L_mem / (L_PHY + L_margin)))"
            ),
            Violation::OnChipAfterOffChip { tier, tech } => {
                write!(f, "tier {tier}: on-chip `{tech}` placed behind an off-chip tier")
            }
            Violation::TooManyOffChipTiers { count, max } => {
                write!(f, "{count} off-chip tiers, at most {max} allowed")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub shoreline_used_mm: f64,
    pub shoreline_budget_mm: f64,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn summary(&self) -> String {
        if self.feasible {
            return "feasible".to_string();
        }
        self.violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Checks unit domains, tier ordering and the summed-shoreline bound.
/// Infeasibility is reported, never raised.
pub fn validate_hierarchy(
    spec: &HierarchySpec,
    catalog: &Catalog,
    budget: &ShorelineBudget,
    mode: Mode,
) -> FeasibilityReport {
    let mut violations = Vec::new();
    if spec.tiers.is_empty() {
        violations.push(Violation::EmptyHierarchy);
    }

    let mut shoreline_used = 0.0;
    let mut seen_off_chip = false;
    let mut off_chip_tiers = 0;
    for (idx, tier) in spec.tiers.iter().enumerate() {
        let level = idx + 1;
        let tech = &tier.tech;
        if !catalog.contains(&tech.name) {
            violations.push(Violation::UnknownTechnology {
                tier: level,
                tech: tech.name.clone(),
            });
        }
        if mode == Mode::Constrained && !tech.allowed_units().contains(&tier.units) {
            violations.push(Violation::UnitsNotAllowed {
                tier: level,
                tech: tech.name.clone(),
                units: tier.units,
                allowed: tech.allowed_units().to_vec(),
            });
        }
        match tech.kind {
            MemoryKind::OnChip if seen_off_chip => violations.push(Violation::OnChipAfterOffChip {
                tier: level,
                tech: tech.name.clone(),
            }),
            MemoryKind::OnChip => {}
            MemoryKind::OffChip => {
                seen_off_chip = true;
                off_chip_tiers += 1;
                if let Some(mm) = budget.footprint(tech) {
                    shoreline_used += f64::from(tier.units) * mm;
                }
            }
        }
    }
    if mode == Mode::Constrained && off_chip_tiers > MAX_OFF_CHIP_TIERS {
        violations.push(Violation::TooManyOffChipTiers {
            count: off_chip_tiers,
            max: MAX_OFF_CHIP_TIERS,
        });
    }
    if shoreline_used > budget.l_mem {
        violations.push(Violation::ShorelineExceeded {
            used_mm: shoreline_used,
            budget_mm: budget.l_mem,
        });
    }

    FeasibilityReport {
        feasible: violations.is_empty(),
        shoreline_used_mm: shoreline_used,
        shoreline_budget_mm: budget.l_mem,
        violations,
    }
}
