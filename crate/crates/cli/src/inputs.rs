//! Loading input files and fingerprinting them for run manifests.

use std::path::Path;

use memexplorer_core::{Catalog, DesignFile, WorkloadFile};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Kind, Tag};

/// Environment variable naming a catalog file to use instead of the
/// bundled one.
pub const CATALOG_ENV: &str = "MEMEXPLORER_CATALOG";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Where an input came from and the hash of its content.
#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub source: String,
    pub sha256: String,
}

pub fn read_text(path: &Path) -> Result<(String, InputRecord), Failure> {
    let text = std::fs::read_to_string(path).tag_with(Kind::Invalid, || format!("cannot read {}", path.display()))?;
    let record = InputRecord {
        source: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok((text, record))
}

/// The active catalog: `MEMEXPLORER_CATALOG` if set, else the bundled one.
/// The hash covers the parsed table, so formatting differences do not
/// change it.
pub fn load_catalog() -> Result<(Catalog, InputRecord), Failure> {
    let (catalog, source) = match std::env::var_os(CATALOG_ENV) {
        Some(path) if !path.is_empty() => {
            let path = Path::new(&path);
            let catalog = Catalog::load(path)
                .tag_with(Kind::Invalid, || format!("{CATALOG_ENV}={}", path.display()))?;
            (catalog, path.display().to_string())
        }
        _ => (Catalog::bundled(), "bundled".to_string()),
    };
    let canonical = serde_json::to_vec(&catalog.to_records()).tag(Kind::Runtime)?;
    Ok((
        catalog,
        InputRecord {
            source,
            sha256: sha256_hex(&canonical),
        },
    ))
}

pub fn load_design(path: &Path) -> Result<(DesignFile, InputRecord), Failure> {
    let (text, record) = read_text(path)?;
    let design = DesignFile::from_json_str(&text).tag_with(Kind::Invalid, || path.display().to_string())?;
    Ok((design, record))
}

pub fn load_workload(path: &Path) -> Result<(WorkloadFile, InputRecord), Failure> {
    let (text, record) = read_text(path)?;
    let workload = WorkloadFile::from_json_str(&text).tag_with(Kind::Invalid, || path.display().to_string())?;
    Ok((workload, record))
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).tag(Kind::Runtime)?;
    text.push('\n');
    std::fs::write(path, text).tag_with(Kind::Runtime, || format!("cannot write {}", path.display()))
}

pub fn require_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).tag_with(Kind::Runtime, || format!("cannot create {}", path.display()))
}

pub fn invalid(message: impl std::fmt::Display) -> Failure {
    Failure::msg(Kind::Invalid, message)
}
