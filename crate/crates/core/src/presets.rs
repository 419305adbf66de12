//! Bundled example designs and workloads.

use crate::design::DesignFile;
use crate::workload::WorkloadFile;

const DESIGNS: [(&str, &str); 5] = [
    ("base", include_str!("../data/designs/base.json")),
    ("p1", include_str!("../data/designs/p1.json")),
    ("p2", include_str!("../data/designs/p2.json")),
    ("d1", include_str!("../data/designs/d1.json")),
    ("d2", include_str!("../data/designs/d2.json")),
];

const WORKLOADS: [(&str, &str); 5] = [
    ("osworld_l", include_str!("../data/workloads/osworld_l.json")),
    ("bfcl_wsb", include_str!("../data/workloads/bfcl_wsb.json")),
    ("qwen3_32b_bfcl", include_str!("../data/workloads/qwen3_32b_bfcl.json")),
    ("llada_8b_gsm8k", include_str!("../data/workloads/llada_8b_gsm8k.json")),
    ("qwen35_397b_moe", include_str!("../data/workloads/qwen35_397b_moe.json")),
];

pub fn design_names() -> impl Iterator<Item = &'static str> {
    DESIGNS.iter().map(|(n, _)| *n)
}

pub fn workload_names() -> impl Iterator<Item = &'static str> {
    WORKLOADS.iter().map(|(n, _)| *n)
}

pub fn design_source(name: &str) -> Option<&'static str> {
    DESIGNS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn workload_source(name: &str) -> Option<&'static str> {
    WORKLOADS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parsed bundled design. Panics on an unknown name.
pub fn design(name: &str) -> DesignFile {
    let src = design_source(name).unwrap_or_else(|| panic!("no bundled design `{name}`"));
    DesignFile::from_json_str(src).expect("bundled design parses")
}

/// Parsed bundled workload. Panics on an unknown name.
pub fn workload(name: &str) -> WorkloadFile {
    let src = workload_source(name).unwrap_or_else(|| panic!("no bundled workload `{name}`"));
    WorkloadFile::from_json_str(src).expect("bundled workload parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    #[test]
    fn every_preset_parses_and_resolves() {
        let catalog = Catalog::bundled();
        for name in design_names() {
            design(name).resolve(&catalog, None).unwrap();
        }
        for name in workload_names() {
            workload(name);
        }
    }
}
