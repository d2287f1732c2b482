//! The aggregator: harvests registered providers into one store and serves
//! the union through the protocol engine, with the `Query` verb on top.
//!
//! Readers take an [`AggregateSnapshot`] and never block harvests. Each
//! archive has its own harvest lock, so distinct archives harvest in
//! parallel; commits swap in a new snapshot.

mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use crate::datestamp::Datestamp;
use crate::description::ArchiveDescription;
use crate::model::{self, extract_quads, ElementQuad, MetadataRecord};
use crate::oryx;
use crate::provider::response::{self, parse_identify, parse_list_response, ResponseError};
use crate::provider::vida::FetchError;
use crate::provider::{split_identifier, ProtocolRequest, RepositorySource, SetInfo, SourceRecord};
use crate::query::Query;

/// Sends a protocol request to a provider and returns the response body.
pub trait HarvestClient: Send + Sync {
    fn request(&self, base_url: &str, req: &ProtocolRequest) -> Result<String, FetchError>;
}

impl<F> HarvestClient for F
where
    F: Fn(&str, &ProtocolRequest) -> Result<String, FetchError> + Send + Sync,
{
    fn request(&self, base_url: &str, req: &ProtocolRequest) -> Result<String, FetchError> {
        self(base_url, req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryStatus {
    Active,
    Failing,
    Suspended,
}

impl EntryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryStatus::Active => "active",
            EntryStatus::Failing => "failing",
            EntryStatus::Suspended => "suspended",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "active" => Some(EntryStatus::Active),
            "failing" => Some(EntryStatus::Failing),
            "suspended" => Some(EntryStatus::Suspended),
            _ => None,
        }
    }
}

/// Failed harvests in a row before an archive is marked failing.
pub const FAILURE_THRESHOLD: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub archive_id: String,
    pub base_url: String,
    /// Harvest point for the next incremental harvest: the provider's
    /// response date at the start of the last error-free harvest.
    pub last_successful_harvest: Option<Datestamp>,
    pub status: EntryStatus,
    pub consecutive_failures: u32,
    pub description: ArchiveDescription,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvenancedRecord {
    pub identifier: String,
    pub source_archive: String,
    pub datestamp: Datestamp,
    pub deleted: bool,
    pub record: Option<Arc<MetadataRecord>>,
    /// One row per element; empty for tombstones.
    pub quads: Vec<ElementQuad>,
}

impl ProvenancedRecord {
    pub fn new(
        identifier: String,
        source_archive: String,
        datestamp: Datestamp,
        record: Option<MetadataRecord>,
    ) -> Self {
        let quads = record.as_ref().map(extract_quads).unwrap_or_default();
        ProvenancedRecord {
            identifier,
            source_archive,
            datestamp,
            deleted: record.is_none(),
            record: record.map(Arc::new),
            quads,
        }
    }

    fn to_source(&self) -> SourceRecord {
        SourceRecord {
            identifier: self.identifier.clone(),
            datestamp: self.datestamp,
            deleted: self.deleted,
            metadata: self.record.clone(),
            sets: vec![self.source_archive.clone()],
        }
    }
}

/// True iff some assignment of the record's elements to the aliases
/// satisfies the query. Tombstones never match.
pub fn eval_query(query: &Query, rec: &ProvenancedRecord) -> bool {
    !rec.deleted && query.matches(&rec.quads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarvestMode {
    Full,
    Incremental,
}

impl HarvestMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HarvestMode::Full => "full",
            HarvestMode::Incremental => "incremental",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestReport {
    pub archive_id: String,
    pub mode: HarvestMode,
    pub added: usize,
    pub updated: usize,
    pub deleted: usize,
    pub unchanged: usize,
    /// (stage, message) pairs.
    pub errors: Vec<(String, String)>,
    pub started_at: Datestamp,
    pub finished_at: Datestamp,
}

impl HarvestReport {
    fn error(&mut self, stage: &str, message: impl Into<String>) {
        self.errors.push((stage.to_string(), message.into()));
    }

    pub fn changed(&self) -> usize {
        self.added + self.updated + self.deleted
    }
}

#[derive(Debug, Error)]
pub enum AggregatorError {
    #[error("cannot register {url}: {message}")]
    Registration { url: String, message: String },
    #[error("badRepository: {url}: {message}")]
    BadRepository { url: String, message: String },
    #[error("archive `{archive_id}` is already registered for {base_url}")]
    Conflict { archive_id: String, base_url: String },
    #[error("no registered archive `{0}`")]
    UnknownArchive(String),
    #[error("archive `{0}` is suspended")]
    Suspended(String),
    #[error("store {path}: {message}")]
    Store { path: PathBuf, message: String },
    #[error("store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// How the aggregator describes itself in Identify.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatorIdentity {
    pub repository_id: String,
    pub description: ArchiveDescription,
}

type Partition = Arc<BTreeMap<String, Arc<ProvenancedRecord>>>;

/// An immutable view of the whole aggregate. Implements
/// [`RepositorySource`], so the protocol engine serves it directly.
#[derive(Debug, Clone)]
pub struct AggregateSnapshot {
    identity: Arc<AggregatorIdentity>,
    registry: BTreeMap<String, RegistryEntry>,
    archives: BTreeMap<String, Partition>,
    /// All records ordered by (datestamp, identifier).
    ordered: Arc<Vec<Arc<ProvenancedRecord>>>,
}

impl AggregateSnapshot {
    fn empty(identity: Arc<AggregatorIdentity>) -> Self {
        AggregateSnapshot {
            identity,
            registry: BTreeMap::new(),
            archives: BTreeMap::new(),
            ordered: Arc::new(Vec::new()),
        }
    }

    fn reindex(&mut self) {
        let mut all: Vec<Arc<ProvenancedRecord>> =
            self.archives.values().flat_map(|p| p.values().cloned()).collect();
        all.sort_by(|a, b| (a.datestamp, &a.identifier).cmp(&(b.datestamp, &b.identifier)));
        self.ordered = Arc::new(all);
    }

    pub fn registry(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.registry.values()
    }

    pub fn entry(&self, archive_id: &str) -> Option<&RegistryEntry> {
        self.registry.get(archive_id)
    }

    pub fn records(&self) -> &[Arc<ProvenancedRecord>] {
        &self.ordered
    }

    pub fn record(&self, identifier: &str) -> Option<&Arc<ProvenancedRecord>> {
        let (archive, _) = split_identifier(identifier)?;
        self.archives.get(archive)?.get(identifier)
    }

    pub fn archive_records(&self, archive_id: &str) -> impl Iterator<Item = &Arc<ProvenancedRecord>> {
        self.archives.get(archive_id).into_iter().flat_map(|p| p.values())
    }

    /// Live records matching `query`, in aggregate order.
    pub fn eval(&self, query: &Query) -> Vec<Arc<ProvenancedRecord>> {
        self.ordered.iter().filter(|r| eval_query(query, r)).cloned().collect()
    }
}

impl RepositorySource for AggregateSnapshot {
    fn repository_id(&self) -> &str {
        &self.identity.repository_id
    }

    fn description(&self) -> &ArchiveDescription {
        &self.identity.description
    }

    fn earliest_datestamp(&self) -> Option<Datestamp> {
        self.ordered.first().map(|r| r.datestamp)
    }

    fn get(&self, identifier: &str) -> Option<SourceRecord> {
        self.record(identifier).map(|r| r.to_source())
    }

    fn select(&self, from: Option<Datestamp>, until: Option<Datestamp>, set: Option<&str>) -> Vec<SourceRecord> {
        self.ordered
            .iter()
            .filter(|r| from.is_none_or(|f| r.datestamp >= f))
            .filter(|r| until.is_none_or(|u| r.datestamp <= u))
            .filter(|r| set.is_none_or(|s| r.source_archive == s))
            .map(|r| r.to_source())
            .collect()
    }

    fn sets(&self) -> Vec<SetInfo> {
        self.registry
            .values()
            .map(|e| SetInfo {
                spec: e.archive_id.clone(),
                name: e.description.archive_name.clone(),
                description: Some(e.description.clone()),
            })
            .collect()
    }

    fn supports_query(&self) -> bool {
        true
    }

    fn query(&self, query: &Query) -> Vec<SourceRecord> {
        self.ordered
            .iter()
            .filter(|r| eval_query(query, r))
            .map(|r| r.to_source())
            .collect()
    }
}

pub struct Aggregator {
    identity: Arc<AggregatorIdentity>,
    dir: Option<PathBuf>,
    state: RwLock<Arc<AggregateSnapshot>>,
    harvest_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    registry_file: Mutex<()>,
}

impl Aggregator {
    /// An aggregator that keeps everything in memory.
    pub fn in_memory(identity: AggregatorIdentity) -> Self {
        let identity = Arc::new(identity);
        Aggregator {
            state: RwLock::new(Arc::new(AggregateSnapshot::empty(identity.clone()))),
            identity,
            dir: None,
            harvest_locks: Mutex::new(HashMap::new()),
            registry_file: Mutex::new(()),
        }
    }

    /// Opens (or initializes) a store directory. The quad index is rebuilt
    /// from the stored records.
    pub fn open(dir: &Path, identity: AggregatorIdentity) -> Result<Self, AggregatorError> {
        let agg = Aggregator {
            dir: Some(dir.to_path_buf()),
            ..Aggregator::in_memory(identity)
        };
        let (registry, archives) = store::load(dir)?;
        let mut snapshot = AggregateSnapshot::empty(agg.identity.clone());
        snapshot.registry = registry.into_iter().map(|e| (e.archive_id.clone(), e)).collect();
        snapshot.archives = archives
            .into_iter()
            .map(|(id, records)| {
                let partition = records.into_iter().map(|r| (r.identifier.clone(), Arc::new(r))).collect();
                (id, Arc::new(partition))
            })
            .collect();
        snapshot.reindex();
        *agg.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
        Ok(agg)
    }

    pub fn identity(&self) -> &AggregatorIdentity {
        &self.identity
    }

    pub fn snapshot(&self) -> Arc<AggregateSnapshot> {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn registry(&self) -> Vec<RegistryEntry> {
        self.snapshot().registry.values().cloned().collect()
    }

    fn harvest_lock(&self, archive_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.harvest_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(archive_id.to_string()).or_default().clone()
    }

    /// Applies `edit` to a copy of the current snapshot and installs it.
    fn commit(&self, edit: impl FnOnce(&mut AggregateSnapshot) -> Result<(), AggregatorError>) -> Result<(), AggregatorError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        let mut next = (**state).clone();
        edit(&mut next)?;
        *state = Arc::new(next);
        Ok(())
    }

    fn save_registry(&self) -> Result<(), AggregatorError> {
        if let Some(dir) = &self.dir {
            let _guard = self.registry_file.lock().unwrap_or_else(|e| e.into_inner());
            store::save_registry(dir, &self.registry())?;
        }
        Ok(())
    }

    /// Issues Identify against `base_url` and records the provider.
    /// Registering a known base URL refreshes its description.
    pub fn register(&self, base_url: &str, client: &dyn HarvestClient) -> Result<RegistryEntry, AggregatorError> {
        let registration = |message: String| AggregatorError::Registration {
            url: base_url.to_string(),
            message,
        };
        let bad = |message: String| AggregatorError::BadRepository {
            url: base_url.to_string(),
            message,
        };
        let text = client
            .request(base_url, &ProtocolRequest::new("Identify"))
            .map_err(|e| registration(e.to_string()))?;
        let ident = parse_identify(&text).map_err(|e| match e {
            ResponseError::Malformed(m) => bad(m),
            other => registration(other.to_string()),
        })?;
        let description = ident.description.map_err(|e| bad(e.to_string()))?;
        let archive_id = ident
            .repository_identifier
            .filter(|id| oryx::is_repository_id(id))
            .ok_or_else(|| bad("Identify carries no usable repository identifier".into()))?;

        let mut result = None;
        self.commit(|snap| {
            if let Some(existing) = snap.registry.values_mut().find(|e| e.base_url == base_url) {
                if existing.archive_id == archive_id {
                    existing.description = description.clone();
                    result = Some(existing.clone());
                    return Ok(());
                }
            }
            if let Some(other) = snap.registry.get(&archive_id) {
                return Err(AggregatorError::Conflict {
                    archive_id: archive_id.clone(),
                    base_url: other.base_url.clone(),
                });
            }
            let entry = RegistryEntry {
                archive_id: archive_id.clone(),
                base_url: base_url.to_string(),
                last_successful_harvest: None,
                status: EntryStatus::Active,
                consecutive_failures: 0,
                description: description.clone(),
            };
            snap.registry.insert(archive_id.clone(), entry.clone());
            result = Some(entry);
            Ok(())
        })?;
        self.save_registry()?;
        Ok(result.expect("commit sets the entry"))
    }

    pub fn set_status(&self, archive_id: &str, status: EntryStatus) -> Result<(), AggregatorError> {
        self.commit(|snap| {
            let entry = snap
                .registry
                .get_mut(archive_id)
                .ok_or_else(|| AggregatorError::UnknownArchive(archive_id.to_string()))?;
            entry.status = status;
            if status == EntryStatus::Active {
                entry.consecutive_failures = 0;
            }
            Ok(())
        })?;
        self.save_registry()
    }

    /// Harvests one archive. Transport and parse problems are reported,
    /// not returned; the records received before a failure are kept.
    pub fn harvest(
        &self,
        archive_id: &str,
        mode: HarvestMode,
        client: &dyn HarvestClient,
        clock: &dyn Fn() -> Datestamp,
    ) -> Result<HarvestReport, AggregatorError> {
        let lock = self.harvest_lock(archive_id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        let snapshot = self.snapshot();
        let entry = snapshot
            .registry
            .get(archive_id)
            .cloned()
            .ok_or_else(|| AggregatorError::UnknownArchive(archive_id.to_string()))?;
        if entry.status == EntryStatus::Suspended {
            return Err(AggregatorError::Suspended(archive_id.to_string()));
        }

        let started_at = clock();
        let mut report = HarvestReport {
            archive_id: archive_id.to_string(),
            mode,
            added: 0,
            updated: 0,
            deleted: 0,
            unchanged: 0,
            errors: Vec::new(),
            started_at,
            finished_at: started_at,
        };
        let current = snapshot.archives.get(archive_id).cloned().unwrap_or_default();
        let mut partition: BTreeMap<String, Arc<ProvenancedRecord>> = (*current).clone();
        let prefix = format!("oai:{archive_id}:");

        let mut req = ProtocolRequest::new("ListRecords").arg("metadataPrefix", "olac");
        if let (HarvestMode::Incremental, Some(from)) = (mode, entry.last_successful_harvest) {
            req = req.arg("from", &from.to_string());
        }
        let mut harvest_point = None;
        loop {
            let text = match client.request(&entry.base_url, &req).or_else(|_| client.request(&entry.base_url, &req)) {
                Ok(text) => text,
                Err(e) => {
                    report.error("transport", e.to_string());
                    break;
                }
            };
            if harvest_point.is_none() {
                harvest_point = Some(response::response_date(&text).unwrap_or(started_at));
            }
            let page = match parse_list_response(&text) {
                Ok(page) => page,
                Err(e) if e.protocol_code() == Some("noRecordsMatch") => break,
                Err(e) => {
                    report.error("response", e.to_string());
                    break;
                }
            };
            for (id, reason) in page.problems {
                report.error("record", format!("{id}: {reason}"));
            }
            for listed in page.records {
                let local = listed.identifier.strip_prefix(&prefix).unwrap_or("");
                if !oryx::is_local_id(local) {
                    report.error(
                        "provenance",
                        format!("`{}` is not an identifier of archive {archive_id}", listed.identifier),
                    );
                    continue;
                }
                let metadata = match (listed.deleted, listed.metadata) {
                    (true, _) => None,
                    (false, Some(md)) => match model::serialize_record(&md) {
                        Ok(_) => Some(md),
                        Err(e) => {
                            report.error("record", format!("{}: {e}", listed.identifier));
                            continue;
                        }
                    },
                    (false, None) => {
                        report.error("record", format!("{}: no olac metadata", listed.identifier));
                        continue;
                    }
                };
                let incoming = ProvenancedRecord::new(
                    listed.identifier.clone(),
                    archive_id.to_string(),
                    listed.datestamp,
                    metadata,
                );
                match partition.get(&listed.identifier) {
                    Some(old) if **old == incoming => {
                        report.unchanged += 1;
                        continue;
                    }
                    Some(old) if !old.deleted && incoming.deleted => report.deleted += 1,
                    Some(old) if old.deleted && !incoming.deleted => report.added += 1,
                    Some(_) => report.updated += 1,
                    None if incoming.deleted => report.deleted += 1,
                    None => report.added += 1,
                }
                partition.insert(listed.identifier, Arc::new(incoming));
            }
            match page.resumption_token {
                Some(token) => req = ProtocolRequest::new("ListRecords").arg("resumptionToken", &token),
                None => break,
            }
        }

        let succeeded = report.errors.is_empty();
        let changed = report.changed() > 0;
        if changed {
            if let Some(dir) = &self.dir {
                store::save_archive(dir, &entry, partition.values().map(|r| r.as_ref()))?;
            }
        }
        self.commit(|snap| {
            if let Some(e) = snap.registry.get_mut(archive_id) {
                if succeeded {
                    e.last_successful_harvest = harvest_point.or(Some(started_at));
                    e.consecutive_failures = 0;
                    if e.status == EntryStatus::Failing {
                        e.status = EntryStatus::Active;
                    }
                } else {
                    e.consecutive_failures += 1;
                    if e.consecutive_failures >= FAILURE_THRESHOLD && e.status == EntryStatus::Active {
                        e.status = EntryStatus::Failing;
                    }
                }
            }
            if changed {
                snap.archives.insert(archive_id.to_string(), Arc::new(partition));
                snap.reindex();
            }
            Ok(())
        })?;
        self.save_registry()?;
        report.finished_at = clock().max(started_at);
        Ok(report)
    }

    /// Harvests every archive that is not suspended, one after another.
    pub fn harvest_all(
        &self,
        mode: HarvestMode,
        client: &dyn HarvestClient,
        clock: &dyn Fn() -> Datestamp,
    ) -> Vec<Result<HarvestReport, AggregatorError>> {
        self.registry()
            .into_iter()
            .filter(|e| e.status != EntryStatus::Suspended)
            .map(|e| self.harvest(&e.archive_id, mode, client, clock))
            .collect()
    }
}

#[cfg(test)]
mod tests;
