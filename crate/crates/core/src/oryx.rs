//! A whole metadata repository in one document.
//!
//! ```text
//! <repository id="demo">
//!   <description> archiveName, archiveURL, curator, ... </description>
//!   <sets> <set spec="...">name</set> ... </sets>          (optional)
//!   <records>
//!     <record id="item1" datestamp="2002-11-30T00:00:00Z">
//!       <setSpec>...</setSpec>                              (zero or more)
//!       <olac:olac ...> ...metadata record... </olac:olac>
//!     </record>
//!     <record id="item2" datestamp="..." status="deleted"/>
//!   </records>
//! </repository>
//! ```
//!
//! Editing operations return a new document and leave the receiver intact.

use std::collections::HashSet;

use thiserror::Error;

use crate::datestamp::{BadDatestamp, Datestamp};
use crate::description::{ArchiveDescription, DescriptionError};
use crate::model::{self, MetadataRecord, RecordError, SerializeError};
use crate::validate::{self, Finding};
use crate::vocab::ApplicationProfile;
use crate::xml;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Active,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetDecl {
    pub spec: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepositoryRecord {
    pub local_id: String,
    pub datestamp: Datestamp,
    pub status: RecordStatus,
    /// Always `None` for deleted records.
    pub metadata: Option<MetadataRecord>,
    pub set_memberships: Vec<String>,
}

impl RepositoryRecord {
    pub fn is_deleted(&self) -> bool {
        self.status == RecordStatus::Deleted
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepositoryDocument {
    pub repository_id: String,
    pub description: ArchiveDescription,
    pub records: Vec<RepositoryRecord>,
    pub sets: Option<Vec<SetDecl>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OryxError {
    #[error("malformed repository at {position}: {message}")]
    Parse {
        position: xml::Position,
        message: String,
    },
    #[error("record `{local_id}`: {source}")]
    Record {
        local_id: String,
        #[source]
        source: RecordError,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Description(#[from] DescriptionError),
    #[error("{0}")]
    Invalid(String),
    #[error("no record `{0}`")]
    NotFound(String),
    #[error("record `{0}` is already deleted")]
    AlreadyDeleted(String),
    #[error("metadata rejected: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Rejected(Vec<Finding>),
    #[error(transparent)]
    BadArgument(#[from] BadDatestamp),
    #[error("from {from} is later than until {until}")]
    BadRange { from: Datestamp, until: Datestamp },
    #[error("record `{local_id}` cannot be written: {source}")]
    Serialize {
        local_id: String,
        #[source]
        source: SerializeError,
    },
}

/// Repository ids: dot-separated labels of letters, digits and hyphens, each
/// starting with a letter (`ethnologue`, `example.org`).
pub fn is_repository_id(s: &str) -> bool {
    s.split('.').all(|label| {
        let mut chars = label.chars();
        chars.next().is_some_and(|c| c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '-')
    })
}

/// Record ids: non-empty, no whitespace, no markup-significant characters.
pub fn is_local_id(s: &str) -> bool {
    !s.is_empty()
        && xml::is_xml_text(s)
        && !s.chars().any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '&' | '"' | '\''))
}

pub fn is_set_spec(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| {
            c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '!' | '~' | '*' | '(' | ')' | ':')
        })
}

fn invalid(msg: impl Into<String>) -> OryxError {
    OryxError::Invalid(msg.into())
}

impl RepositoryDocument {
    pub fn new(repository_id: &str, description: ArchiveDescription) -> Result<Self, OryxError> {
        let doc = RepositoryDocument {
            repository_id: repository_id.to_string(),
            description,
            records: Vec::new(),
            sets: None,
        };
        doc.check()?;
        Ok(doc)
    }

    pub fn get(&self, local_id: &str) -> Option<&RepositoryRecord> {
        self.records.iter().find(|r| r.local_id == local_id)
    }

    fn position(&self, local_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.local_id == local_id)
    }

    /// Checks every document invariant.
    pub fn check(&self) -> Result<(), OryxError> {
        if !is_repository_id(&self.repository_id) {
            return Err(invalid(format!(
                "`{}` is not a valid repository id",
                self.repository_id
            )));
        }
        self.description.check()?;
        let mut declared = HashSet::new();
        if let Some(sets) = &self.sets {
            for set in sets {
                if !is_set_spec(&set.spec) || !declared.insert(set.spec.as_str()) {
                    return Err(invalid(format!("bad or duplicate set spec `{}`", set.spec)));
                }
                if !xml::is_xml_text(&set.name) {
                    return Err(invalid(format!("set `{}` has an unwritable name", set.spec)));
                }
            }
        }
        let mut seen = HashSet::new();
        for record in &self.records {
            if !is_local_id(&record.local_id) {
                return Err(invalid(format!("`{}` is not a valid record id", record.local_id)));
            }
            if !seen.insert(record.local_id.as_str()) {
                return Err(OryxError::DuplicateId(record.local_id.clone()));
            }
            match (record.status, &record.metadata) {
                (RecordStatus::Deleted, Some(_)) => {
                    return Err(invalid(format!(
                        "deleted record `{}` carries metadata",
                        record.local_id
                    )))
                }
                (RecordStatus::Active, None) => {
                    return Err(invalid(format!(
                        "active record `{}` has no metadata",
                        record.local_id
                    )))
                }
                _ => {}
            }
            for spec in &record.set_memberships {
                if !declared.contains(spec.as_str()) {
                    return Err(invalid(format!(
                        "record `{}` belongs to undeclared set `{spec}`",
                        record.local_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Inserts or replaces a record. Metadata with validation errors is
    /// rejected; warnings and informational findings are returned.
    pub fn upsert_record(
        &self,
        local_id: &str,
        metadata: MetadataRecord,
        now: Datestamp,
        profile: &ApplicationProfile,
    ) -> Result<(RepositoryDocument, Vec<Finding>), OryxError> {
        if !is_local_id(local_id) {
            return Err(invalid(format!("`{local_id}` is not a valid record id")));
        }
        let findings = validate::validate_record(&metadata, profile);
        if validate::has_errors(&findings) {
            return Err(OryxError::Rejected(findings));
        }
        model::serialize_record(&metadata).map_err(|source| OryxError::Serialize {
            local_id: local_id.to_string(),
            source,
        })?;
        let mut next = self.clone();
        match next.position(local_id) {
            Some(i) => {
                let record = &mut next.records[i];
                record.status = RecordStatus::Active;
                record.metadata = Some(metadata);
                record.datestamp = now;
            }
            None => next.records.push(RepositoryRecord {
                local_id: local_id.to_string(),
                datestamp: now,
                status: RecordStatus::Active,
                metadata: Some(metadata),
                set_memberships: Vec::new(),
            }),
        }
        Ok((next, findings))
    }

    /// Turns a record into a tombstone.
    pub fn delete_record(&self, local_id: &str, now: Datestamp) -> Result<RepositoryDocument, OryxError> {
        let i = self
            .position(local_id)
            .ok_or_else(|| OryxError::NotFound(local_id.to_string()))?;
        if self.records[i].is_deleted() {
            return Err(OryxError::AlreadyDeleted(local_id.to_string()));
        }
        let mut next = self.clone();
        let record = &mut next.records[i];
        record.status = RecordStatus::Deleted;
        record.metadata = None;
        record.datestamp = now;
        Ok(next)
    }

    /// Adds a set declaration (or renames an existing one).
    pub fn declare_set(&self, spec: &str, name: &str) -> Result<RepositoryDocument, OryxError> {
        if !is_set_spec(spec) {
            return Err(invalid(format!("`{spec}` is not a valid set spec")));
        }
        let mut next = self.clone();
        let sets = next.sets.get_or_insert_with(Vec::new);
        match sets.iter_mut().find(|s| s.spec == spec) {
            Some(existing) => existing.name = name.to_string(),
            None => sets.push(SetDecl {
                spec: spec.to_string(),
                name: name.to_string(),
            }),
        }
        Ok(next)
    }

    /// Replaces the set memberships of a record; its datestamp advances.
    pub fn assign_sets(
        &self,
        local_id: &str,
        specs: &[String],
        now: Datestamp,
    ) -> Result<RepositoryDocument, OryxError> {
        let i = self
            .position(local_id)
            .ok_or_else(|| OryxError::NotFound(local_id.to_string()))?;
        let mut next = self.clone();
        next.records[i].set_memberships = specs.to_vec();
        next.records[i].datestamp = now;
        next.check()?;
        Ok(next)
    }

    /// Records with `from <= datestamp <= until`, optionally restricted to a
    /// set, ordered by (datestamp, local id). Tombstones are included.
    pub fn select_records(
        &self,
        from: Option<Datestamp>,
        until: Option<Datestamp>,
        set: Option<&str>,
    ) -> Result<Vec<&RepositoryRecord>, OryxError> {
        if let (Some(from), Some(until)) = (from, until) {
            if from > until {
                return Err(OryxError::BadRange { from, until });
            }
        }
        let mut selected: Vec<&RepositoryRecord> = self
            .records
            .iter()
            .filter(|r| from.is_none_or(|f| r.datestamp >= f))
            .filter(|r| until.is_none_or(|u| r.datestamp <= u))
            .filter(|r| set.is_none_or(|s| r.set_memberships.iter().any(|m| m == s)))
            .collect();
        selected.sort_by(|a, b| (a.datestamp, &a.local_id).cmp(&(b.datestamp, &b.local_id)));
        Ok(selected)
    }

    /// [`select_records`](Self::select_records) with textual bounds.
    pub fn select_records_str(
        &self,
        from: Option<&str>,
        until: Option<&str>,
        set: Option<&str>,
    ) -> Result<Vec<&RepositoryRecord>, OryxError> {
        let from = from.map(str::parse).transpose()?;
        let until = until.map(str::parse).transpose()?;
        self.select_records(from, until, set)
    }

    pub fn earliest_datestamp(&self) -> Option<Datestamp> {
        self.records.iter().map(|r| r.datestamp).min()
    }
}

pub fn parse_repository(doc: &str) -> Result<RepositoryDocument, OryxError> {
    let document = xml::parse_document(doc).map_err(|e| OryxError::Parse {
        position: xml::error_position(&e),
        message: e.to_string(),
    })?;
    let root = document.root_element();
    let at = |node: roxmltree::Node<'_, '_>, message: String| OryxError::Parse {
        position: xml::node_position(node),
        message,
    };
    if root.tag_name().name() != "repository" {
        return Err(at(root, "root element must be <repository>".into()));
    }
    let repository_id = root
        .attribute("id")
        .ok_or_else(|| at(root, "<repository> needs an id attribute".into()))?
        .to_string();
    let description_node = xml::child(root, "description")
        .ok_or_else(|| OryxError::Description(DescriptionError {
            fields: vec!["description".into()],
        }))?;
    let description = ArchiveDescription::from_element(description_node)?;

    let sets = xml::child(root, "sets").map(|node| {
        xml::children(node, "set")
            .map(|s| SetDecl {
                spec: s.attribute("spec").unwrap_or_default().to_string(),
                name: xml::text_of(s),
            })
            .collect()
    });

    let mut records = Vec::new();
    if let Some(list) = xml::child(root, "records") {
        for node in xml::children(list, "record") {
            records.push(parse_record_entry(node)?);
        }
    }

    let repo = RepositoryDocument {
        repository_id,
        description,
        records,
        sets,
    };
    repo.check()?;
    Ok(repo)
}

fn parse_record_entry(node: roxmltree::Node<'_, '_>) -> Result<RepositoryRecord, OryxError> {
    let at = |message: String| OryxError::Parse {
        position: xml::node_position(node),
        message,
    };
    let local_id = node
        .attribute("id")
        .ok_or_else(|| at("<record> needs an id attribute".into()))?
        .to_string();
    let datestamp: Datestamp = node
        .attribute("datestamp")
        .ok_or_else(|| at(format!("record `{local_id}` has no datestamp")))?
        .parse()?;
    let status = match node.attribute("status") {
        None => RecordStatus::Active,
        Some("deleted") => RecordStatus::Deleted,
        Some(other) => return Err(at(format!("unknown record status `{other}`"))),
    };
    let set_memberships = xml::children(node, "setSpec").map(xml::text_of).collect();
    let bodies: Vec<_> = node
        .children()
        .filter(|c| c.is_element() && c.tag_name().name() != "setSpec")
        .collect();
    let metadata = match bodies.as_slice() {
        [] => None,
        [body] => Some(model::record_from_element(*body).map_err(|source| OryxError::Record {
            local_id: local_id.clone(),
            source,
        })?),
        _ => return Err(at(format!("record `{local_id}` has more than one metadata body"))),
    };
    Ok(RepositoryRecord {
        local_id,
        datestamp,
        status,
        metadata,
        set_memberships,
    })
}

pub fn serialize_repository(repo: &RepositoryDocument) -> Result<String, OryxError> {
    repo.check()?;
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<repository id=\"{}\">\n  <description>\n",
        xml::escape_attr(&repo.repository_id)
    ));
    repo.description.write_fields(&mut out, "    ");
    out.push_str("  </description>\n");
    match &repo.sets {
        None => {}
        Some(sets) if sets.is_empty() => out.push_str("  <sets/>\n"),
        Some(sets) => {
            out.push_str("  <sets>\n");
            for set in sets {
                out.push_str(&format!(
                    "    <set spec=\"{}\">{}</set>\n",
                    xml::escape_attr(&set.spec),
                    xml::escape_text(&set.name)
                ));
            }
            out.push_str("  </sets>\n");
        }
    }
    if repo.records.is_empty() {
        out.push_str("  <records/>\n");
    } else {
        out.push_str("  <records>\n");
        for record in &repo.records {
            write_record_entry(record, &mut out)?;
        }
        out.push_str("  </records>\n");
    }
    out.push_str("</repository>\n");
    Ok(out)
}

fn write_record_entry(record: &RepositoryRecord, out: &mut String) -> Result<(), OryxError> {
    out.push_str(&format!(
        "    <record id=\"{}\" datestamp=\"{}\"",
        xml::escape_attr(&record.local_id),
        record.datestamp
    ));
    if record.is_deleted() {
        out.push_str(" status=\"deleted\"");
    }
    if record.set_memberships.is_empty() && record.metadata.is_none() {
        out.push_str("/>\n");
        return Ok(());
    }
    out.push_str(">\n");
    for spec in &record.set_memberships {
        out.push_str(&format!("      <setSpec>{}</setSpec>\n", xml::escape_text(spec)));
    }
    if let Some(metadata) = &record.metadata {
        out.push_str("      ");
        model::write_record(metadata, out, "      ").map_err(|source| OryxError::Serialize {
            local_id: record.local_id.clone(),
            source,
        })?;
        out.push('\n');
    }
    out.push_str("    </record>\n");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DcTag, QualifiedElement};

    fn description() -> ArchiveDescription {
        ArchiveDescription {
            archive_name: "Demo Archive".into(),
            archive_url: "http://example.org/demo".into(),
            curator: "Jane Curator".into(),
            location: "Dallas".into(),
            institution_name: "Demo Institute".into(),
            institution_url: "http://example.org".into(),
            synopsis: "Field recordings.".into(),
            access_terms: "Open".into(),
        }
    }

    fn titled(t: &str) -> MetadataRecord {
        MetadataRecord::new().push(QualifiedElement::new(DcTag::Title, t))
    }

    fn sample() -> RepositoryDocument {
        let profile = ApplicationProfile::shipped();
        let mut repo = RepositoryDocument::new("demo", description()).unwrap();
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            repo = repo
                .upsert_record(id, titled(id), Datestamp::from_unix(1_000 + i as i64), &profile)
                .unwrap()
                .0;
        }
        repo
    }

    #[test]
    fn three_records_in_file_order() {
        let text = serialize_repository(&sample()).unwrap();
        let parsed = parse_repository(&text).unwrap();
        let ids: Vec<_> = parsed.records.iter().map(|r| r.local_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(parsed, sample());
        assert_eq!(serialize_repository(&parsed).unwrap(), text);
    }

    #[test]
    fn empty_repository() {
        let repo = RepositoryDocument::new("demo", description()).unwrap();
        let parsed = parse_repository(&serialize_repository(&repo).unwrap()).unwrap();
        assert!(parsed.records.is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = serialize_repository(&sample()).unwrap().replace("id=\"b\"", "id=\"a\"");
        assert_eq!(parse_repository(&text), Err(OryxError::DuplicateId("a".into())));
    }

    #[test]
    fn missing_description_fields_are_listed() {
        let text = serialize_repository(&sample())
            .unwrap()
            .replace("<curator>Jane Curator</curator>", "")
            .replace("<location>Dallas</location>", "");
        match parse_repository(&text) {
            Err(OryxError::Description(e)) => assert_eq!(e.fields, ["curator", "location"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn date_only_datestamps_are_normalized() {
        let text = serialize_repository(&sample())
            .unwrap()
            .replace("1970-01-01T00:16:40Z", "2002-05-06");
        let parsed = parse_repository(&text).unwrap();
        assert_eq!(parsed.records[0].datestamp.to_string(), "2002-05-06T00:00:00Z");
    }

    #[test]
    fn upsert_semantics() {
        let profile = ApplicationProfile::shipped();
        let empty = RepositoryDocument::new("demo", description()).unwrap();
        let now = Datestamp::from_unix(5_000);
        let (one, _) = empty.upsert_record("x", titled("x"), now, &profile).unwrap();
        assert_eq!(one.records.len(), 1);
        assert_eq!(one.records[0].datestamp, now);
        assert!(empty.records.is_empty());

        let later = now.plus_seconds(10);
        let (again, _) = one.upsert_record("x", titled("y"), later, &profile).unwrap();
        assert_eq!(again.records.len(), 1);
        assert_eq!(again.records[0].datestamp, later);
    }

    #[test]
    fn upsert_rejects_invalid_metadata() {
        let profile = ApplicationProfile::shipped();
        let bad = MetadataRecord::new()
            .declare("olac", crate::xml::OLAC_NS)
            .push(
                QualifiedElement::new(DcTag::Type, "")
                    .typed(crate::model::QName::new("olac", "linguistic-type"))
                    .coded("banana"),
            );
        let repo = RepositoryDocument::new("demo", description()).unwrap();
        assert!(matches!(
            repo.upsert_record("x", bad, Datestamp::EPOCH, &profile),
            Err(OryxError::Rejected(_))
        ));
    }

    #[test]
    fn delete_semantics() {
        let repo = sample();
        let now = Datestamp::from_unix(9_999);
        let deleted = repo.delete_record("b", now).unwrap();
        let b = deleted.get("b").unwrap();
        assert!(b.is_deleted());
        assert!(b.metadata.is_none());
        assert_eq!(b.datestamp, now);
        assert_eq!(repo.delete_record("zz", now), Err(OryxError::NotFound("zz".into())));
        assert_eq!(
            deleted.delete_record("b", now),
            Err(OryxError::AlreadyDeleted("b".into()))
        );
        let text = serialize_repository(&deleted).unwrap();
        assert!(text.contains("status=\"deleted\""));
        assert_eq!(parse_repository(&text).unwrap(), deleted);
    }

    #[test]
    fn delete_then_upsert_reactivates() {
        let profile = ApplicationProfile::shipped();
        let repo = sample().delete_record("a", Datestamp::from_unix(2_000)).unwrap();
        let (back, _) = repo
            .upsert_record("a", titled("new"), Datestamp::from_unix(3_000), &profile)
            .unwrap();
        let a = back.get("a").unwrap();
        assert_eq!(a.status, RecordStatus::Active);
        assert_eq!(a.metadata, Some(titled("new")));
    }

    #[test]
    fn selection_bounds_are_inclusive() {
        let repo = sample();
        assert_eq!(repo.select_records(None, None, None).unwrap().len(), 3);
        let t = Datestamp::from_unix(1_001);
        let hit = repo.select_records(Some(t), Some(t), None).unwrap();
        assert_eq!(hit.len(), 1);
        assert_eq!(hit[0].local_id, "b");
        assert!(matches!(
            repo.select_records_str(Some("garbage"), None, None),
            Err(OryxError::BadArgument(_))
        ));
        assert!(matches!(
            repo.select_records(Some(t.plus_seconds(1)), Some(t), None),
            Err(OryxError::BadRange { .. })
        ));
    }

    #[test]
    fn sets_and_memberships() {
        let repo = sample().declare_set("audio", "Audio recordings").unwrap();
        let now = Datestamp::from_unix(7_000);
        let repo = repo.assign_sets("a", &["audio".to_string()], now).unwrap();
        assert_eq!(repo.select_records(None, None, Some("audio")).unwrap().len(), 1);
        assert!(repo.assign_sets("b", &["video".to_string()], now).is_err());
        let text = serialize_repository(&repo).unwrap();
        assert_eq!(parse_repository(&text).unwrap(), repo);
    }
}
