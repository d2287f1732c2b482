//! On-disk layout of an aggregator store:
//!
//! ```text
//! <dir>/registry.json          registered archives
//! <dir>/archives/<id>.xml      harvested records, one repository document per archive
//! ```
//!
//! Record identifiers are stored as local ids below the archive id.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AggregatorError, EntryStatus, ProvenancedRecord, RegistryEntry};
use crate::description::ArchiveDescription;
use crate::oryx::{self, RecordStatus, RepositoryDocument, RepositoryRecord};
use crate::provider::oai_identifier;

pub const REGISTRY_FILE: &str = "registry.json";
pub const ARCHIVES_DIR: &str = "archives";

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    archives: Vec<EntryWire>,
}

#[derive(Serialize, Deserialize)]
struct EntryWire {
    archive_id: String,
    base_url: String,
    last_successful_harvest: Option<String>,
    status: String,
    #[serde(default)]
    consecutive_failures: u32,
    description: DescriptionWire,
}

#[derive(Serialize, Deserialize)]
struct DescriptionWire {
    archive_name: String,
    archive_url: String,
    curator: String,
    location: String,
    institution_name: String,
    institution_url: String,
    synopsis: String,
    access_terms: String,
}

impl From<&ArchiveDescription> for DescriptionWire {
    fn from(d: &ArchiveDescription) -> Self {
        DescriptionWire {
            archive_name: d.archive_name.clone(),
            archive_url: d.archive_url.clone(),
            curator: d.curator.clone(),
            location: d.location.clone(),
            institution_name: d.institution_name.clone(),
            institution_url: d.institution_url.clone(),
            synopsis: d.synopsis.clone(),
            access_terms: d.access_terms.clone(),
        }
    }
}

impl From<DescriptionWire> for ArchiveDescription {
    fn from(d: DescriptionWire) -> Self {
        ArchiveDescription {
            archive_name: d.archive_name,
            archive_url: d.archive_url,
            curator: d.curator,
            location: d.location,
            institution_name: d.institution_name,
            institution_url: d.institution_url,
            synopsis: d.synopsis,
            access_terms: d.access_terms,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AggregatorError + '_ {
    move |source| AggregatorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, message: impl Into<String>) -> AggregatorError {
    AggregatorError::Store {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes via a sibling temporary file so readers never see half a file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), AggregatorError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn archive_path(dir: &Path, archive_id: &str) -> PathBuf {
    dir.join(ARCHIVES_DIR).join(format!("{archive_id}.xml"))
}

pub(super) fn save_registry(dir: &Path, entries: &[RegistryEntry]) -> Result<(), AggregatorError> {
    let file = RegistryFile {
        archives: entries
            .iter()
            .map(|e| EntryWire {
                archive_id: e.archive_id.clone(),
                base_url: e.base_url.clone(),
                last_successful_harvest: e.last_successful_harvest.map(|d| d.to_string()),
                status: e.status.as_str().to_string(),
                consecutive_failures: e.consecutive_failures,
                description: (&e.description).into(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("registry serializes");
    text.push('\n');
    write_atomic(&dir.join(REGISTRY_FILE), &text)
}

pub(super) fn save_archive<'a>(
    dir: &Path,
    entry: &RegistryEntry,
    records: impl Iterator<Item = &'a ProvenancedRecord>,
) -> Result<(), AggregatorError> {
    let path = archive_path(dir, &entry.archive_id);
    let prefix = format!("oai:{}:", entry.archive_id);
    let doc = RepositoryDocument {
        repository_id: entry.archive_id.clone(),
        description: entry.description.clone(),
        records: records
            .map(|r| RepositoryRecord {
                local_id: r.identifier.strip_prefix(&prefix).unwrap_or(&r.identifier).to_string(),
                datestamp: r.datestamp,
                status: if r.deleted { RecordStatus::Deleted } else { RecordStatus::Active },
                metadata: r.record.as_deref().cloned(),
                set_memberships: Vec::new(),
            })
            .collect(),
        sets: None,
    };
    let text = oryx::serialize_repository(&doc).map_err(|e| corrupt(&path, e.to_string()))?;
    write_atomic(&path, &text)
}

type Loaded = (Vec<RegistryEntry>, Vec<(String, Vec<ProvenancedRecord>)>);

pub(super) fn load(dir: &Path) -> Result<Loaded, AggregatorError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let registry_path = dir.join(REGISTRY_FILE);
    let entries = match fs::read_to_string(&registry_path) {
        Ok(text) => parse_registry(&registry_path, &text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io(&registry_path)(e)),
    };
    let mut archives = Vec::new();
    for entry in &entries {
        let path = archive_path(dir, &entry.archive_id);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(io(&path)(e)),
        };
        let doc = oryx::parse_repository(&text).map_err(|e| corrupt(&path, e.to_string()))?;
        if doc.repository_id != entry.archive_id {
            return Err(corrupt(&path, format!("holds archive `{}`", doc.repository_id)));
        }
        let records = doc
            .records
            .into_iter()
            .map(|r| {
                ProvenancedRecord::new(
                    oai_identifier(&entry.archive_id, &r.local_id),
                    entry.archive_id.clone(),
                    r.datestamp,
                    r.metadata,
                )
            })
            .collect();
        archives.push((entry.archive_id.clone(), records));
    }
    Ok((entries, archives))
}

fn parse_registry(path: &Path, text: &str) -> Result<Vec<RegistryEntry>, AggregatorError> {
    let file: RegistryFile = serde_json::from_str(text).map_err(|e| corrupt(path, e.to_string()))?;
    let mut entries = Vec::new();
    for wire in file.archives {
        let status = EntryStatus::parse(&wire.status)
            .ok_or_else(|| corrupt(path, format!("unknown status `{}`", wire.status)))?;
        let last_successful_harvest = wire
            .last_successful_harvest
            .map(|s| s.parse().map_err(|e: crate::datestamp::BadDatestamp| corrupt(path, e.to_string())))
            .transpose()?;
        if !oryx::is_repository_id(&wire.archive_id) {
            return Err(corrupt(path, format!("bad archive id `{}`", wire.archive_id)));
        }
        entries.push(RegistryEntry {
            archive_id: wire.archive_id,
            base_url: wire.base_url,
            last_successful_harvest,
            status,
            consecutive_failures: wire.consecutive_failures,
            description: wire.description.into(),
        });
    }
    Ok(entries)
}
