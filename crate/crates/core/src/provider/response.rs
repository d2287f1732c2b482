//! Reading protocol responses: the harvesting side of the wire.

use thiserror::Error;

use super::SetInfo;
use crate::datestamp::Datestamp;
use crate::description::{ArchiveDescription, DescriptionError};
use crate::model::{self, MetadataRecord};
use crate::xml;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{code}: {message}")]
    Protocol { code: String, message: String },
}

impl ResponseError {
    pub fn protocol_code(&self) -> Option<&str> {
        match self {
            ResponseError::Protocol { code, .. } => Some(code),
            ResponseError::Malformed(_) => None,
        }
    }
}

fn malformed(msg: impl Into<String>) -> ResponseError {
    ResponseError::Malformed(msg.into())
}

/// One record from a ListRecords, GetRecord or Query response.
#[derive(Debug, Clone, PartialEq)]
pub struct ListedRecord {
    pub identifier: String,
    pub datestamp: Datestamp,
    pub deleted: bool,
    pub sets: Vec<String>,
    /// Present for live records served in the `olac` format.
    pub metadata: Option<MetadataRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ListResponse {
    pub records: Vec<ListedRecord>,
    /// Records that could not be read, as (identifier or position, reason).
    pub problems: Vec<(String, String)>,
    /// Non-empty token when more records remain.
    pub resumption_token: Option<String>,
    pub complete_list_size: Option<usize>,
    pub response_date: Option<Datestamp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyResponse {
    pub repository_name: String,
    pub base_url: String,
    pub repository_identifier: Option<String>,
    pub earliest_datestamp: Option<Datestamp>,
    pub description: Result<ArchiveDescription, DescriptionError>,
}

fn payload<'a, 'i>(
    doc: &'a roxmltree::Document<'i>,
    expected: &[&str],
) -> Result<roxmltree::Node<'a, 'i>, ResponseError> {
    let root = doc.root_element();
    if !root.has_tag_name((xml::OAI_NS, "OAI-PMH")) {
        return Err(malformed(format!("unexpected root element `{}`", root.tag_name().name())));
    }
    if let Some(err) = xml::child(root, "error") {
        return Err(ResponseError::Protocol {
            code: err.attribute("code").unwrap_or("").to_string(),
            message: xml::text_of(err),
        });
    }
    expected
        .iter()
        .find_map(|name| xml::child(root, name))
        .ok_or_else(|| malformed(format!("no {} element", expected.join(" or "))))
}

fn parse(text: &str) -> Result<roxmltree::Document<'_>, ResponseError> {
    xml::parse_document(text).map_err(|e| malformed(e.to_string()))
}

fn date_of(doc: &roxmltree::Document<'_>) -> Option<Datestamp> {
    xml::child_text(doc.root_element(), "responseDate").and_then(|s| s.trim().parse().ok())
}

/// The `responseDate` of any response, error responses included.
pub fn response_date(text: &str) -> Option<Datestamp> {
    date_of(&parse(text).ok()?)
}

pub fn parse_identify(text: &str) -> Result<IdentifyResponse, ResponseError> {
    let doc = parse(text)?;
    let node = payload(&doc, &["Identify"])?;
    let mut repository_identifier = None;
    let mut description = None;
    for d in xml::children(node, "description") {
        for block in d.children().filter(|c| c.is_element()) {
            match block.tag_name().name() {
                "oai-identifier" => {
                    repository_identifier = xml::child_text(block, "repositoryIdentifier")
                        .map(|s| s.trim().to_string())
                }
                "olac-archive" => description = Some(ArchiveDescription::from_element(block)),
                _ => {}
            }
        }
    }
    Ok(IdentifyResponse {
        repository_name: xml::child_text(node, "repositoryName").unwrap_or_default(),
        base_url: xml::child_text(node, "baseURL").unwrap_or_default(),
        repository_identifier,
        earliest_datestamp: xml::child_text(node, "earliestDatestamp").and_then(|s| s.trim().parse().ok()),
        description: description.unwrap_or_else(|| {
            Err(DescriptionError {
                fields: vec!["olac-archive".to_string()],
            })
        }),
    })
}

/// Parses ListRecords, ListIdentifiers, GetRecord and Query responses.
pub fn parse_list_response(text: &str) -> Result<ListResponse, ResponseError> {
    let doc = parse(text)?;
    let node = payload(&doc, &["ListRecords", "ListIdentifiers", "GetRecord"])?;
    let mut out = ListResponse {
        response_date: date_of(&doc),
        ..ListResponse::default()
    };
    for (i, item) in node.children().filter(|c| c.is_element()).enumerate() {
        let header = match item.tag_name().name() {
            "record" => match xml::child(item, "header") {
                Some(h) => h,
                None => {
                    out.problems.push((format!("#{}", i + 1), "record without header".into()));
                    continue;
                }
            },
            "header" => item,
            "resumptionToken" => {
                let token = xml::text_of(item).trim().to_string();
                out.resumption_token = (!token.is_empty()).then_some(token);
                out.complete_list_size = item.attribute("completeListSize").and_then(|s| s.parse().ok());
                continue;
            }
            _ => continue,
        };
        match read_record(item, header) {
            Ok(r) => out.records.push(r),
            Err(reason) => {
                let id = xml::child_text(header, "identifier").unwrap_or_else(|| format!("#{}", i + 1));
                out.problems.push((id, reason));
            }
        }
    }
    Ok(out)
}

fn read_record(item: roxmltree::Node<'_, '_>, header: roxmltree::Node<'_, '_>) -> Result<ListedRecord, String> {
    let identifier = xml::child_text(header, "identifier")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or("header without identifier")?;
    let datestamp = xml::child_text(header, "datestamp")
        .ok_or("header without datestamp")?
        .trim()
        .parse::<Datestamp>()
        .map_err(|e| e.to_string())?;
    let deleted = header.attribute("status") == Some("deleted");
    let sets = xml::children(header, "setSpec").map(|s| xml::text_of(s).trim().to_string()).collect();
    let metadata = match xml::child(item, "metadata").and_then(|m| m.children().find(|c| c.is_element())) {
        Some(root) if !deleted && root.tag_name().name() == "olac" => {
            Some(model::record_from_element(root).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    Ok(ListedRecord {
        identifier,
        datestamp,
        deleted,
        sets,
        metadata,
    })
}

pub fn parse_list_sets(text: &str) -> Result<Vec<SetInfo>, ResponseError> {
    let doc = parse(text)?;
    let node = match payload(&doc, &["ListSets"]) {
        Err(ResponseError::Protocol { code, .. }) if code == "noSetHierarchy" => return Ok(Vec::new()),
        other => other?,
    };
    Ok(xml::children(node, "set")
        .map(|set| SetInfo {
            spec: xml::child_text(set, "setSpec").unwrap_or_default().trim().to_string(),
            name: xml::child_text(set, "setName").unwrap_or_default(),
            description: xml::child(set, "setDescription")
                .and_then(|d| xml::child(d, "olac-archive"))
                .and_then(|block| ArchiveDescription::from_element(block).ok()),
        })
        .collect())
}
