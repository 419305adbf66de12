//! The discrete design space: per-parameter domains, lattice
//! configurations ("genes"), the `[0,1]^d` embedding seen by the surrogate,
//! and conversion to evaluable [`DesignPoint`]s.
//!
//! Ordinal parameters (VLEN, layer and stack counts, bit widths, the
//! conventional-SRAM switch) embed as `rank / (k - 1)`; unordered ones (PE
//! shape, memory type, software strategy) embed one-hot. A memory family
//! with zero stacks has no meaningful type, so its type gene is pinned to
//! the first choice; configurations are always kept in that canonical form
//! so that the embedding is a bijection onto the lattice.

use std::fmt;

use memexplorer_core::catalog::{MemoryKind, ShorelineBudget};
use memexplorer_core::design::{PE_SHAPES, VLEN_CHOICES};
use memexplorer_core::{
    BwPriority, Catalog, ComputePowerModel, ComputeSpec, Dataflow, DesignPoint, HierarchySpec,
    Mode, PrecisionConfig, SoftwareStrategy, StoragePriority, TierInstance,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::DseError;

/// One off-chip memory family: a choice of technology and a stack count.
/// Zero stacks removes the family from the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffChipFamily {
    pub name: String,
    pub types: Vec<String>,
    pub stacks: Vec<u32>,
}

impl OffChipFamily {
    fn new(name: &str, types: &[&str]) -> Self {
        OffChipFamily {
            name: name.to_string(),
            types: types.iter().map(|t| t.to_string()).collect(),
            stacks: vec![0, 1, 2, 4, 8],
        }
    }
}

/// Per-parameter domains. Every field may be overridden from JSON; missing
/// fields keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpace {
    pub pe_shapes: Vec<(u32, u32)>,
    pub vlen: Vec<u32>,
    pub sram3d_layers: Vec<u32>,
    pub sram2d: Vec<bool>,
    /// Off-chip families in hierarchy order, nearest to compute first.
    pub off_chip: Vec<OffChipFamily>,
    pub weight_bits: Vec<u32>,
    pub activation_bits: Vec<u32>,
    pub kv_bits: Vec<u32>,
    pub storage_priority: Vec<StoragePriority>,
    pub dataflow: Vec<Dataflow>,
    pub bw_priority: Vec<BwPriority>,
    pub clock_hz: f64,
}

impl Default for DesignSpace {
    fn default() -> Self {
        DesignSpace {
            pe_shapes: PE_SHAPES.to_vec(),
            vlen: VLEN_CHOICES.to_vec(),
            sram3d_layers: vec![0, 1, 2, 3, 4],
            sram2d: vec![false, true],
            off_chip: vec![
                OffChipFamily::new("HBM", &["HBM3E", "HBM4"]),
                OffChipFamily::new("GDDR", &["GDDR6", "GDDR7"]),
                OffChipFamily::new("HBF", &["HBF"]),
                OffChipFamily::new("LPDDR", &["LPDDR5X", "LPDDR6"]),
            ],
            weight_bits: vec![4, 8],
            activation_bits: vec![8, 16],
            kv_bits: vec![4, 8],
            storage_priority: vec![
                StoragePriority::Activation,
                StoragePriority::KVCache,
                StoragePriority::Weight,
                StoragePriority::Equal,
            ],
            dataflow: vec![Dataflow::WS, Dataflow::IS, Dataflow::OS],
            bw_priority: vec![BwPriority::Matrix, BwPriority::Vector, BwPriority::Equal],
            clock_hz: memexplorer_core::design::DEFAULT_CLOCK_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneKind {
    Ordinal,
    Categorical,
}

/// Description of one lattice coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gene {
    pub name: String,
    pub kind: GeneKind,
    pub size: usize,
}

impl Gene {
    /// Number of embedding coordinates. A single-valued categorical takes
    /// none; a single-valued ordinal keeps one constant coordinate.
    pub fn width(&self) -> usize {
        match self.kind {
            GeneKind::Ordinal => 1,
            GeneKind::Categorical if self.size == 1 => 0,
            GeneKind::Categorical => self.size,
        }
    }
}

/// A lattice point: one domain index per gene.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Config(pub Vec<usize>);

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

const PE: usize = 0;
const VLEN: usize = 1;
const SRAM3D: usize = 2;
const SRAM2D: usize = 3;
const FAMILY_BASE: usize = 4;

impl DesignSpace {
    /// Checks domain shapes and that every named technology exists in the
    /// catalog with the expected placement.
    pub fn check(&self, catalog: &Catalog) -> Result<(), DseError> {
        fn non_empty<T>(name: &str, v: &[T]) -> Result<(), DseError> {
            if v.is_empty() {
                return Err(DseError::Space(format!("domain `{name}` is empty")));
            }
            Ok(())
        }
        fn ascending<T: PartialOrd + fmt::Debug>(name: &str, v: &[T]) -> Result<(), DseError> {
            non_empty(name, v)?;
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DseError::Space(format!(
                    "ordinal domain `{name}` must be strictly ascending, got {v:?}"
                )));
            }
            Ok(())
        }
        fn distinct<T: PartialEq + fmt::Debug>(name: &str, v: &[T]) -> Result<(), DseError> {
            non_empty(name, v)?;
            for (i, a) in v.iter().enumerate() {
                if v[i + 1..].contains(a) {
                    return Err(DseError::Space(format!("domain `{name}` repeats {a:?}")));
                }
            }
            Ok(())
        }
        distinct("pe_shapes", &self.pe_shapes)?;
        ascending("vlen", &self.vlen)?;
        ascending("sram3d_layers", &self.sram3d_layers)?;
        ascending("sram2d", &self.sram2d)?;
        ascending("weight_bits", &self.weight_bits)?;
        ascending("activation_bits", &self.activation_bits)?;
        ascending("kv_bits", &self.kv_bits)?;
        distinct("storage_priority", &self.storage_priority)?;
        distinct("dataflow", &self.dataflow)?;
        distinct("bw_priority", &self.bw_priority)?;
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(DseError::Space(format!("clock_hz must be positive, got {}", self.clock_hz)));
        }
        for name in ["SRAM2D", "SRAM3D"] {
            match catalog.get(name).ok() {
                Some(t) if t.kind == MemoryKind::OnChip => {}
                _ => {
                    return Err(DseError::Space(format!(
                        "catalog has no on-chip technology `{name}`"
                    )))
                }
            }
        }
        for fam in &self.off_chip {
            distinct(&format!("{}.types", fam.name), &fam.types)?;
            ascending(&format!("{}.stacks", fam.name), &fam.stacks)?;
            for t in &fam.types {
                match catalog.get(t).ok() {
                    Some(tech) if tech.kind == MemoryKind::OffChip => {}
                    Some(_) => {
                        return Err(DseError::Space(format!(
                            "family `{}`: `{t}` is not an off-chip technology",
                            fam.name
                        )))
                    }
                    None => {
                        return Err(DseError::Space(format!(
                            "family `{}`: `{t}` is not in the catalog",
                            fam.name
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    fn tail_base(&self) -> usize {
        FAMILY_BASE + 2 * self.off_chip.len()
    }

    /// Number of leading genes that determine feasibility; the software
    /// strategy genes after them never do.
    pub fn hardware_genes(&self) -> usize {
        self.tail_base() + 3
    }

    /// Gene descriptions in lattice order.
    pub fn genes(&self) -> Vec<Gene> {
        let g = |name: &str, kind, size| Gene {
            name: name.to_string(),
            kind,
            size,
        };
        let mut out = vec![
            g("pe_shape", GeneKind::Categorical, self.pe_shapes.len()),
            g("vlen", GeneKind::Ordinal, self.vlen.len()),
            g("sram3d_layers", GeneKind::Ordinal, self.sram3d_layers.len()),
            g("sram2d", GeneKind::Ordinal, self.sram2d.len()),
        ];
        for fam in &self.off_chip {
            out.push(g(&format!("{}_type", fam.name), GeneKind::Categorical, fam.types.len()));
            out.push(g(&format!("{}_stacks", fam.name), GeneKind::Ordinal, fam.stacks.len()));
        }
        out.extend([
            g("weight_bits", GeneKind::Ordinal, self.weight_bits.len()),
            g("activation_bits", GeneKind::Ordinal, self.activation_bits.len()),
            g("kv_bits", GeneKind::Ordinal, self.kv_bits.len()),
            g("storage_priority", GeneKind::Categorical, self.storage_priority.len()),
            g("dataflow", GeneKind::Categorical, self.dataflow.len()),
            g("bw_priority", GeneKind::Categorical, self.bw_priority.len()),
        ]);
        out
    }

    /// Domain size of every gene, in lattice order.
    pub fn gene_sizes(&self) -> Vec<usize> {
        let mut out = vec![
            self.pe_shapes.len(),
            self.vlen.len(),
            self.sram3d_layers.len(),
            self.sram2d.len(),
        ];
        for fam in &self.off_chip {
            out.push(fam.types.len());
            out.push(fam.stacks.len());
        }
        out.extend([
            self.weight_bits.len(),
            self.activation_bits.len(),
            self.kv_bits.len(),
            self.storage_priority.len(),
            self.dataflow.len(),
            self.bw_priority.len(),
        ]);
        out
    }

    /// Dimension of the embedding.
    pub fn dim(&self) -> usize {
        self.genes().iter().map(Gene::width).sum()
    }

    /// Number of distinct canonical configurations.
    pub fn cardinality(&self) -> u128 {
        let genes = self.genes();
        let mut n: u128 = 1;
        for (i, gene) in genes.iter().enumerate() {
            if (FAMILY_BASE..self.tail_base()).contains(&i) {
                continue;
            }
            n *= gene.size as u128;
        }
        for fam in &self.off_chip {
            let nonzero = fam.stacks.iter().filter(|&&s| s > 0).count() as u128;
            let zero = (fam.stacks.len() as u128) - nonzero;
            n *= zero + nonzero * fam.types.len() as u128;
        }
        n
    }

    /// Pins the type of every empty off-chip family to its first choice.
    pub fn canonicalize(&self, config: &mut Config) {
        for (f, fam) in self.off_chip.iter().enumerate() {
            let type_gene = FAMILY_BASE + 2 * f;
            if fam.stacks[config.0[type_gene + 1]] == 0 {
                config.0[type_gene] = 0;
            }
        }
    }

    pub fn is_canonical(&self, config: &Config) -> bool {
        let mut c = config.clone();
        self.canonicalize(&mut c);
        c == *config
    }

    fn check_config(&self, config: &Config) -> Result<(), DseError> {
        let sizes = self.gene_sizes();
        if config.0.len() != sizes.len() {
            return Err(DseError::Encoding(format!(
                "configuration has {} genes, the space has {}",
                config.0.len(),
                sizes.len()
            )));
        }
        if let Some(i) = config.0.iter().zip(&sizes).position(|(v, size)| v >= size) {
            let g = &self.genes()[i];
            return Err(DseError::Encoding(format!(
                "gene `{}` index {} outside 0..{}",
                g.name, config.0[i], g.size
            )));
        }
        Ok(())
    }

    /// Embeds a configuration into `[0,1]^dim`.
    pub fn encode_config(&self, config: &Config) -> Result<Vec<f64>, DseError> {
        self.check_config(config)?;
        let mut out = Vec::with_capacity(self.dim());
        for (v, g) in config.0.iter().zip(self.genes()) {
            match g.kind {
                GeneKind::Ordinal if g.size == 1 => out.push(0.0),
                GeneKind::Ordinal => out.push(*v as f64 / (g.size - 1) as f64),
                GeneKind::Categorical if g.size == 1 => {}
                GeneKind::Categorical => {
                    out.extend((0..g.size).map(|k| if k == *v { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }

    /// Snaps an arbitrary vector in `[0,1]^dim` to the nearest lattice point
    /// (rounding ordinals, arg-max over one-hot groups) in canonical form.
    pub fn snap(&self, x: &[f64]) -> Result<Config, DseError> {
        if x.len() != self.dim() {
            return Err(DseError::Encoding(format!(
                "vector has {} coordinates, the space embeds in {}",
                x.len(),
                self.dim()
            )));
        }
        let mut genes = Vec::new();
        let mut pos = 0;
        for g in self.genes() {
            let v = match g.kind {
                GeneKind::Ordinal => {
                    let u = x[pos].clamp(0.0, 1.0);
                    pos += 1;
                    if g.size == 1 {
                        0
                    } else {
                        (u * (g.size - 1) as f64).round() as usize
                    }
                }
                GeneKind::Categorical if g.size == 1 => 0,
                GeneKind::Categorical => {
                    let group = &x[pos..pos + g.size];
                    pos += g.size;
                    // First maximum wins.
                    let mut best = 0;
                    for (k, val) in group.iter().enumerate() {
                        if *val > group[best] {
                            best = k;
                        }
                    }
                    best
                }
            };
            genes.push(v);
        }
        let mut config = Config(genes);
        self.canonicalize(&mut config);
        Ok(config)
    }

    /// Uniform draw over every gene, then canonicalized. One draw over the
    /// whole (uncanonicalized) lattice is split into genes by mixed radix,
    /// which is equivalent to independent per-gene draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        let sizes = self.gene_sizes();
        let total = sizes.iter().try_fold(1u64, |acc, &n| acc.checked_mul(n as u64));
        let genes = match total {
            Some(total) => {
                let mut rest = rng.gen_range(0..total);
                sizes
                    .iter()
                    .map(|&n| {
                        let v = (rest % n as u64) as usize;
                        rest /= n as u64;
                        v
                    })
                    .collect()
            }
            None => sizes.iter().map(|&n| rng.gen_range(0..n)).collect(),
        };
        let mut config = Config(genes);
        self.canonicalize(&mut config);
        config
    }

    /// Mixed-radix index of the leading `genes` coordinates; equal indices
    /// mean equal prefixes.
    pub fn prefix_index(&self, config: &Config, genes: usize) -> u128 {
        config
            .0
            .iter()
            .zip(self.gene_sizes())
            .take(genes)
            .fold(0u128, |acc, (&v, n)| acc * n as u128 + v as u128)
    }

    /// Structural rules that can be read off the genes alone: an on-chip
    /// buffer must exist, at most `max_off_chip` families may be populated,
    /// and their summed shoreline must fit the memory edge. Every design
    /// rejected here is also rejected by the full feasibility check; the
    /// screen only avoids building it.
    pub fn screen(
        &self,
        config: &Config,
        catalog: &Catalog,
        shoreline: &ShorelineBudget,
        max_off_chip: usize,
    ) -> Result<(), DseError> {
        self.check_config(config)?;
        let c = &config.0;
        if !self.sram2d[c[SRAM2D]] && self.sram3d_layers[c[SRAM3D]] == 0 {
            return Err(DseError::Infeasible("the hierarchy has no on-chip tier".into()));
        }
        let mut populated = 0;
        let mut used = 0.0;
        for (f, fam) in self.off_chip.iter().enumerate() {
            let stacks = fam.stacks[c[FAMILY_BASE + 2 * f + 1]];
            if stacks == 0 {
                continue;
            }
            populated += 1;
            let tech = catalog
                .get(&fam.types[c[FAMILY_BASE + 2 * f]])
                .map_err(|e| DseError::Space(e.to_string()))?;
            if let Some(mm) = shoreline.footprint(tech) {
                used += f64::from(stacks) * mm;
            }
        }
        if populated > max_off_chip {
            return Err(DseError::Infeasible(format!(
                "{populated} off-chip tiers, at most {max_off_chip} allowed"
            )));
        }
        if used > shoreline.l_mem {
            return Err(DseError::Infeasible(format!(
                "off-chip shoreline {used:.2} mm exceeds the {:.2} mm memory edge",
                shoreline.l_mem
            )));
        }
        Ok(())
    }

    /// Builds the design point a configuration stands for.
    pub fn to_design(
        &self,
        config: &Config,
        catalog: &Catalog,
        compute_power: ComputePowerModel,
    ) -> Result<DesignPoint, DseError> {
        self.check_config(config)?;
        let c = &config.0;
        let tail = self.tail_base();
        let (pe_rows, pe_cols) = self.pe_shapes[c[PE]];
        let mut compute = ComputeSpec::new(pe_rows, pe_cols, self.vlen[c[VLEN]]);
        compute.clock_hz = self.clock_hz;

        let tech = |name: &str| {
            catalog
                .get(name)
                .cloned()
                .map_err(|e| DseError::Space(e.to_string()))
        };
        let tier = |name: &str, units: u32| -> Result<TierInstance, DseError> {
            TierInstance::new(tech(name)?, units).map_err(|e| DseError::Space(e.to_string()))
        };
        let mut tiers = Vec::new();
        if self.sram2d[c[SRAM2D]] {
            tiers.push(tier("SRAM2D", 1)?);
        }
        let layers = self.sram3d_layers[c[SRAM3D]];
        if layers > 0 {
            tiers.push(tier("SRAM3D", layers)?);
        }
        for (f, fam) in self.off_chip.iter().enumerate() {
            let stacks = fam.stacks[c[FAMILY_BASE + 2 * f + 1]];
            if stacks > 0 {
                tiers.push(tier(&fam.types[c[FAMILY_BASE + 2 * f]], stacks)?);
            }
        }
        let hierarchy = HierarchySpec::new(tiers)
            .map_err(|e| DseError::Infeasible(format!("configuration {config}: {e}")))?;
        Ok(DesignPoint {
            name: None,
            compute,
            hierarchy,
            precision: PrecisionConfig {
                weight_bits: self.weight_bits[c[tail]],
                activation_bits: self.activation_bits[c[tail + 1]],
                kv_bits: self.kv_bits[c[tail + 2]],
            },
            strategy: SoftwareStrategy {
                storage_priority: self.storage_priority[c[tail + 3]],
                dataflow: self.dataflow[c[tail + 4]],
                bw_priority: self.bw_priority[c[tail + 5]],
            },
            compute_power,
            mode: Mode::Constrained,
        })
    }

    /// Recovers the lattice configuration of a design point.
    pub fn config_of(&self, design: &DesignPoint) -> Result<Config, DseError> {
        fn index<T: PartialEq + fmt::Debug>(name: &str, domain: &[T], v: &T) -> Result<usize, DseError> {
            domain
                .iter()
                .position(|d| d == v)
                .ok_or_else(|| DseError::Encoding(format!("{name} {v:?} is outside the domain")))
        }
        let shape = (design.compute.pe_rows, design.compute.pe_cols);
        let mut genes = vec![
            index("PE shape", &self.pe_shapes, &shape)?,
            index("VLEN", &self.vlen, &design.compute.vlen)?,
            0,
            0,
        ];
        let mut sram2d = false;
        let mut sram3d = 0;
        let mut family_genes = vec![(0usize, 0u32); self.off_chip.len()];
        let mut next_family = 0;
        for (pos, t) in design.hierarchy.tiers.iter().enumerate() {
            match t.tech.name.as_str() {
                "SRAM2D" if pos == 0 && t.units == 1 => sram2d = true,
                "SRAM3D" if sram3d == 0 && pos <= usize::from(sram2d) => sram3d = t.units,
                name => {
                    let found = self.off_chip[next_family..]
                        .iter()
                        .position(|fam| fam.types.iter().any(|n| n == name));
                    let Some(offset) = found else {
                        return Err(DseError::Encoding(format!(
                            "tier {} ({}) does not fit the family order of the space",
                            pos + 1,
                            t.label()
                        )));
                    };
                    let f = next_family + offset;
                    let ty = self.off_chip[f].types.iter().position(|n| n == name).unwrap_or(0);
                    family_genes[f] = (ty, t.units);
                    next_family = f + 1;
                }
            }
        }
        genes[SRAM3D] = index("3D-SRAM layers", &self.sram3d_layers, &sram3d)?;
        genes[SRAM2D] = index("conventional SRAM", &self.sram2d, &sram2d)?;
        for (fam, (ty, stacks)) in self.off_chip.iter().zip(family_genes) {
            genes.push(ty);
            genes.push(index(&format!("{} stacks", fam.name), &fam.stacks, &stacks)?);
        }
        let p = &design.precision;
        let s = &design.strategy;
        genes.push(index("weight bits", &self.weight_bits, &p.weight_bits)?);
        genes.push(index("activation bits", &self.activation_bits, &p.activation_bits)?);
        genes.push(index("KV bits", &self.kv_bits, &p.kv_bits)?);
        genes.push(index("storage priority", &self.storage_priority, &s.storage_priority)?);
        genes.push(index("dataflow", &self.dataflow, &s.dataflow)?);
        genes.push(index("bandwidth priority", &self.bw_priority, &s.bw_priority)?);
        let mut config = Config(genes);
        self.canonicalize(&mut config);
        Ok(config)
    }

    /// Embeds a design point; fails if any parameter is outside the space.
    pub fn encode(&self, design: &DesignPoint) -> Result<Vec<f64>, DseError> {
        self.encode_config(&self.config_of(design)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_space_shape() {
        let space = DesignSpace::default();
        space.check(&Catalog::bundled()).unwrap();
        assert_eq!(space.genes().len(), 18);
        assert_eq!(space.dim(), 35);
        // 9·5·5·2 · (1+2·4)³ · (1+4) · 2·2·2 · 4·3·3
        assert_eq!(space.cardinality(), 9 * 5 * 5 * 2 * 729 * 5 * 8 * 36);
    }

    #[test]
    fn minimum_ordinals_encode_to_zero() {
        let space = DesignSpace::default();
        let config = Config(vec![0; space.genes().len()]);
        let x = space.encode_config(&config).unwrap();
        let mut pos = 0;
        for g in space.genes() {
            if g.kind == GeneKind::Ordinal {
                assert_eq!(x[pos], 0.0, "{}", g.name);
            }
            pos += g.width();
        }
    }

    #[test]
    fn sram3d_rank_scaling() {
        let space = DesignSpace::default();
        let mut config = Config(vec![0; space.genes().len()]);
        config.0[SRAM3D] = 2;
        let x = space.encode_config(&config).unwrap();
        // PE one-hot (9), VLEN, then 3D-SRAM.
        assert_eq!(x[10], 0.5);
    }

    #[test]
    fn embedding_round_trips() {
        let catalog = Catalog::bundled();
        let space = DesignSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut built = 0;
        for _ in 0..1000 {
            let config = space.sample(&mut rng);
            let x = space.encode_config(&config).unwrap();
            assert_eq!(space.snap(&x).unwrap(), config);
            if let Ok(design) = space.to_design(&config, &catalog, ComputePowerModel::default()) {
                assert_eq!(space.config_of(&design).unwrap(), config);
                assert_eq!(space.encode(&design).unwrap(), x);
                built += 1;
            }
        }
        assert!(built > 900);
    }

    #[test]
    fn out_of_domain_values_are_rejected() {
        let space = DesignSpace::default();
        let mut config = Config(vec![0; space.genes().len()]);
        config.0[VLEN] = 5;
        assert!(matches!(space.encode_config(&config), Err(DseError::Encoding(_))));
        let catalog = Catalog::bundled();
        let mut design = memexplorer_core::presets::design("p1").resolve(&catalog, None).unwrap();
        design.compute.vlen = 384;
        assert!(matches!(space.encode(&design), Err(DseError::Encoding(_))));
    }

    #[test]
    fn bundled_designs_lie_in_the_space() {
        let catalog = Catalog::bundled();
        let space = DesignSpace::default();
        for name in ["p1", "d1", "d2"] {
            let design = memexplorer_core::presets::design(name).resolve(&catalog, None).unwrap();
            let config = space.config_of(&design).unwrap();
            let rebuilt = space.to_design(&config, &catalog, design.compute_power).unwrap();
            assert_eq!(rebuilt.hierarchy, design.hierarchy, "{name}");
        }
    }

    #[test]
    fn empty_family_type_is_canonical() {
        let space = DesignSpace::default();
        let mut config = Config(vec![0; space.genes().len()]);
        config.0[FAMILY_BASE] = 1; // HBM4 with zero stacks
        assert!(!space.is_canonical(&config));
        space.canonicalize(&mut config);
        assert_eq!(config.0[FAMILY_BASE], 0);
    }

    #[test]
    fn space_overrides_parse() {
        let space: DesignSpace =
            serde_json::from_str(r#"{"weight_bits":[8],"activation_bits":[8],"kv_bits":[8]}"#).unwrap();
        assert_eq!(space.weight_bits, vec![8]);
        assert_eq!(space.vlen.len(), 5);
        assert_eq!(space.dim(), 35);
        assert!(serde_json::from_str::<DesignSpace>(r#"{"vlen_typo":[1]}"#).is_err());
    }
}
