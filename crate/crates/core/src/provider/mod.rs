//! The metadata harvesting protocol engine.
//!
//! [`handle_request`] answers the six standard verbs (Identify,
//! ListMetadataFormats, ListSets, ListIdentifiers, ListRecords, GetRecord)
//! over any [`RepositorySource`], plus the `Query` verb for sources that
//! support it. Responses embed the OLAC archive description in Identify and
//! serve two metadata formats: `olac` natively and `oai_dc` through the
//! crosswalk.

pub mod response;
pub mod token;
pub mod vida;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::crosswalk::{self, dumbdown_record};
use crate::datestamp::{Datestamp, Granularity};
use crate::description::ArchiveDescription;
use crate::model::{self, MetadataRecord};
use crate::oryx::RepositoryDocument;
use crate::query::{self, Query};
use crate::vocab::ApplicationProfile;
use crate::xml;

pub use token::ResumptionToken;

pub const PROTOCOL_VERSION: &str = "2.0";
pub const DEFAULT_PAGE_SIZE: usize = 500;
pub const DEFAULT_TOKEN_EXPIRY_HOURS: u64 = 24;
pub const GRANULARITY: &str = "YYYY-MM-DDThh:mm:ssZ";

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    /// Base URL reported in responses.
    pub base_url: String,
    pub page_size: usize,
    pub token_expiry_hours: u64,
    pub profile: Arc<ApplicationProfile>,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        ProviderConfig {
            base_url: base_url.into(),
            page_size: DEFAULT_PAGE_SIZE,
            token_expiry_hours: DEFAULT_TOKEN_EXPIRY_HOURS,
            profile: Arc::new(ApplicationProfile::shipped()),
        }
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetadataFormat {
    Olac,
    OaiDc,
}

impl MetadataFormat {
    pub const ALL: [MetadataFormat; 2] = [MetadataFormat::Olac, MetadataFormat::OaiDc];

    pub fn prefix(self) -> &'static str {
        match self {
            MetadataFormat::Olac => "olac",
            MetadataFormat::OaiDc => "oai_dc",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        MetadataFormat::ALL.into_iter().find(|f| f.prefix() == prefix)
    }

    fn schema(self) -> &'static str {
        match self {
            MetadataFormat::Olac => "http://www.language-archives.org/OLAC/1.0/olac.xsd",
            MetadataFormat::OaiDc => "http://www.openarchives.org/OAI/2.0/oai_dc.xsd",
        }
    }

    fn namespace(self) -> &'static str {
        match self {
            MetadataFormat::Olac => xml::OLAC_NS,
            MetadataFormat::OaiDc => xml::OAI_DC_NS,
        }
    }
}

/// A record as seen through the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecord {
    pub identifier: String,
    pub datestamp: Datestamp,
    pub deleted: bool,
    pub metadata: Option<Arc<MetadataRecord>>,
    pub sets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetInfo {
    pub spec: String,
    pub name: String,
    /// Archive description published as the set description.
    pub description: Option<ArchiveDescription>,
}

/// What the protocol engine needs from a repository. Implementations hand
/// out a consistent snapshot: repeated calls within one request see the
/// same records.
pub trait RepositorySource {
    fn repository_id(&self) -> &str;
    fn description(&self) -> &ArchiveDescription;
    fn earliest_datestamp(&self) -> Option<Datestamp>;
    /// Looks up a full `oai:` identifier.
    fn get(&self, identifier: &str) -> Option<SourceRecord>;
    /// Records with `from <= datestamp <= until` in the optional set,
    /// ordered by (datestamp, identifier). Tombstones are included.
    fn select(&self, from: Option<Datestamp>, until: Option<Datestamp>, set: Option<&str>) -> Vec<SourceRecord>;
    fn sets(&self) -> Vec<SetInfo>;

    fn supports_query(&self) -> bool {
        false
    }

    /// Non-deleted records matching `query`, in the same order as `select`.
    fn query(&self, _query: &Query) -> Vec<SourceRecord> {
        Vec::new()
    }
}

pub fn oai_identifier(repository_id: &str, local_id: &str) -> String {
    format!("oai:{repository_id}:{local_id}")
}

/// Splits `oai:<repository>:<local>`.
pub fn split_identifier(identifier: &str) -> Option<(&str, &str)> {
    let rest = identifier.strip_prefix("oai:")?;
    let (repo, local) = rest.split_once(':')?;
    (!repo.is_empty() && !local.is_empty()).then_some((repo, local))
}

impl RepositorySource for RepositoryDocument {
    fn repository_id(&self) -> &str {
        &self.repository_id
    }

    fn description(&self) -> &ArchiveDescription {
        &self.description
    }

    fn earliest_datestamp(&self) -> Option<Datestamp> {
        RepositoryDocument::earliest_datestamp(self)
    }

    fn get(&self, identifier: &str) -> Option<SourceRecord> {
        let (repo, local) = split_identifier(identifier)?;
        if repo != self.repository_id {
            return None;
        }
        RepositoryDocument::get(self, local).map(|r| self.source_record(r))
    }

    fn select(&self, from: Option<Datestamp>, until: Option<Datestamp>, set: Option<&str>) -> Vec<SourceRecord> {
        self.select_records(from, until, set)
            .unwrap_or_default()
            .into_iter()
            .map(|r| self.source_record(r))
            .collect()
    }

    fn sets(&self) -> Vec<SetInfo> {
        self.sets
            .iter()
            .flatten()
            .map(|s| SetInfo {
                spec: s.spec.clone(),
                name: s.name.clone(),
                description: None,
            })
            .collect()
    }
}

impl RepositoryDocument {
    fn source_record(&self, r: &crate::oryx::RepositoryRecord) -> SourceRecord {
        SourceRecord {
            identifier: oai_identifier(&self.repository_id, &r.local_id),
            datestamp: r.datestamp,
            deleted: r.is_deleted(),
            metadata: r.metadata.clone().map(Arc::new),
            sets: r.set_memberships.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    BadVerb,
    BadArgument,
    CannotDisseminateFormat,
    IdDoesNotExist,
    NoRecordsMatch,
    BadResumptionToken,
    NoSetHierarchy,
    /// The virtual data provider could not fetch the repository document.
    UpstreamUnavailable,
    /// The fetched repository document is not valid.
    BadRepository,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadVerb => "badVerb",
            ErrorCode::BadArgument => "badArgument",
            ErrorCode::CannotDisseminateFormat => "cannotDisseminateFormat",
            ErrorCode::IdDoesNotExist => "idDoesNotExist",
            ErrorCode::NoRecordsMatch => "noRecordsMatch",
            ErrorCode::BadResumptionToken => "badResumptionToken",
            ErrorCode::NoSetHierarchy => "noSetHierarchy",
            ErrorCode::UpstreamUnavailable => "upstreamUnavailable",
            ErrorCode::BadRepository => "badRepository",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        use ErrorCode::*;
        [
            BadVerb,
            BadArgument,
            CannotDisseminateFormat,
            IdDoesNotExist,
            NoRecordsMatch,
            BadResumptionToken,
            NoSetHierarchy,
            UpstreamUnavailable,
            BadRepository,
        ]
        .into_iter()
        .find(|c| c.as_str() == code)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verb plus arguments, in the order received. Transport layers build one
/// from GET query strings and form-encoded POST bodies alike.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProtocolRequest {
    pub pairs: Vec<(String, String)>,
}

impl ProtocolRequest {
    pub fn new(verb: &str) -> Self {
        ProtocolRequest {
            pairs: vec![("verb".to_string(), verb.to_string())],
        }
    }

    pub fn arg(mut self, name: &str, value: &str) -> Self {
        self.pairs.push((name.to_string(), value.to_string()));
        self
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        ProtocolRequest {
            pairs: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// Parses an `application/x-www-form-urlencoded` string.
    pub fn from_query_string(qs: &str) -> Self {
        ProtocolRequest::from_pairs(url::form_urlencoded::parse(qs.as_bytes()).into_owned())
    }

    pub fn to_query_string(&self) -> String {
        url::form_urlencoded::Serializer::new(String::new())
            .extend_pairs(&self.pairs)
            .finish()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn verb(&self) -> Option<&str> {
        self.get("verb")
    }

    fn arguments_without(&self, skip: &[&str]) -> Vec<(String, String)> {
        let mut args: Vec<_> = self
            .pairs
            .iter()
            .filter(|(k, _)| !skip.contains(&k.as_str()))
            .cloned()
            .collect();
        args.sort();
        args
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolResponse {
    pub xml: String,
    pub error: Option<ErrorCode>,
}

#[derive(Debug)]
struct Failure {
    code: ErrorCode,
    message: String,
}

fn fail<T>(code: ErrorCode, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        code,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verb {
    Identify,
    ListMetadataFormats,
    ListSets,
    ListIdentifiers,
    ListRecords,
    GetRecord,
    Query,
}

impl Verb {
    fn parse(name: &str) -> Option<Verb> {
        Some(match name {
            "Identify" => Verb::Identify,
            "ListMetadataFormats" => Verb::ListMetadataFormats,
            "ListSets" => Verb::ListSets,
            "ListIdentifiers" => Verb::ListIdentifiers,
            "ListRecords" => Verb::ListRecords,
            "GetRecord" => Verb::GetRecord,
            "Query" => Verb::Query,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Verb::Identify => "Identify",
            Verb::ListMetadataFormats => "ListMetadataFormats",
            Verb::ListSets => "ListSets",
            Verb::ListIdentifiers => "ListIdentifiers",
            Verb::ListRecords => "ListRecords",
            Verb::GetRecord => "GetRecord",
            Verb::Query => "Query",
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        match self {
            Verb::Identify => &[],
            Verb::ListMetadataFormats => &["identifier"],
            Verb::ListSets => &["resumptionToken"],
            Verb::ListIdentifiers | Verb::ListRecords => {
                &["metadataPrefix", "from", "until", "set", "resumptionToken"]
            }
            Verb::GetRecord => &["identifier", "metadataPrefix"],
            Verb::Query => &["sql", "elements", "metadataPrefix", "resumptionToken"],
        }
    }
}

/// Answers one protocol request. `now` is the response date and the clock
/// used for token issue and expiry.
pub fn handle_request(
    req: &ProtocolRequest,
    src: &dyn RepositorySource,
    config: &ProviderConfig,
    now: Datestamp,
) -> ProtocolResponse {
    let outcome = dispatch(req, src, config, now);
    render(req, &config.base_url, now, outcome)
}

/// An error response for failures detected before a source is available.
pub fn error_response(
    req: &ProtocolRequest,
    base_url: &str,
    now: Datestamp,
    code: ErrorCode,
    message: &str,
) -> ProtocolResponse {
    render(
        req,
        base_url,
        now,
        Err(Failure {
            code,
            message: message.to_string(),
        }),
    )
}

fn render(
    req: &ProtocolRequest,
    base_url: &str,
    now: Datestamp,
    outcome: Result<String, Failure>,
) -> ProtocolResponse {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<OAI-PMH xmlns=\"{ns}\" xmlns:xsi=\"{xsi}\" xsi:schemaLocation=\"{ns} http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd\">\n",
        ns = xml::OAI_NS,
        xsi = xml::XSI_NS
    ));
    out.push_str(&format!("  <responseDate>{now}</responseDate>\n"));
    out.push_str("  <request");
    let mut echoed = HashSet::new();
    for (k, v) in &req.pairs {
        if is_echoable_name(k) && echoed.insert(k.as_str()) {
            out.push_str(&format!(" {k}=\"{}\"", xml::escape_attr(&sanitize(v))));
        }
    }
    out.push_str(&format!(">{}</request>\n", xml::escape_text(base_url)));
    let error = match outcome {
        Ok(payload) => {
            out.push_str(&payload);
            None
        }
        Err(failure) => {
            out.push_str(&format!(
                "  <error code=\"{}\">{}</error>\n",
                failure.code,
                xml::escape_text(&sanitize(&failure.message))
            ));
            Some(failure.code)
        }
    };
    out.push_str("</OAI-PMH>\n");
    ProtocolResponse { xml: out, error }
}

fn is_echoable_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with("xml")
}

/// Drops characters XML cannot carry.
fn sanitize(s: &str) -> String {
    s.chars().filter(|c| xml::is_xml_text(c.encode_utf8(&mut [0; 4]))).collect()
}

fn dispatch(
    req: &ProtocolRequest,
    src: &dyn RepositorySource,
    config: &ProviderConfig,
    now: Datestamp,
) -> Result<String, Failure> {
    let verbs: Vec<&str> = req
        .pairs
        .iter()
        .filter(|(k, _)| k == "verb")
        .map(|(_, v)| v.as_str())
        .collect();
    let verb = match verbs.as_slice() {
        [] => return fail(ErrorCode::BadVerb, "the verb argument is missing"),
        [one] => match Verb::parse(one) {
            Some(Verb::Query) if !src.supports_query() => {
                return fail(ErrorCode::BadVerb, "this provider does not support Query")
            }
            Some(v) => v,
            None => return fail(ErrorCode::BadVerb, format!("`{one}` is not a protocol verb")),
        },
        _ => return fail(ErrorCode::BadVerb, "the verb argument is repeated"),
    };

    let mut seen = HashSet::new();
    for (k, _) in &req.pairs {
        if !seen.insert(k.as_str()) {
            return fail(ErrorCode::BadArgument, format!("argument `{k}` is repeated"));
        }
        if k != "verb" && !verb.allowed().contains(&k.as_str()) {
            return fail(
                ErrorCode::BadArgument,
                format!("`{k}` is not an argument of {}", verb.name()),
            );
        }
    }

    match verb {
        Verb::Identify => Ok(identify(src, config)),
        Verb::ListMetadataFormats => list_metadata_formats(req, src),
        Verb::ListSets => list_sets(req, src),
        Verb::GetRecord => get_record(req, src, config),
        Verb::ListIdentifiers | Verb::ListRecords | Verb::Query => list(verb, req, src, config, now),
    }
}

fn identify(src: &dyn RepositorySource, config: &ProviderConfig) -> String {
    let desc = src.description();
    let earliest = src.earliest_datestamp().unwrap_or(Datestamp::EPOCH);
    let mut out = String::from("  <Identify>\n");
    out.push_str(&format!(
        "    <repositoryName>{}</repositoryName>\n",
        xml::escape_text(&desc.archive_name)
    ));
    out.push_str(&format!("    <baseURL>{}</baseURL>\n", xml::escape_text(&config.base_url)));
    out.push_str(&format!("    <protocolVersion>{PROTOCOL_VERSION}</protocolVersion>\n"));
    out.push_str(&format!("    <earliestDatestamp>{earliest}</earliestDatestamp>\n"));
    out.push_str("    <deletedRecord>persistent</deletedRecord>\n");
    out.push_str(&format!("    <granularity>{GRANULARITY}</granularity>\n"));
    out.push_str(&format!(
        "    <description>\n      <oai-identifier xmlns=\"{}\">\n        <scheme>oai</scheme>\n        <repositoryIdentifier>{}</repositoryIdentifier>\n        <delimiter>:</delimiter>\n        <sampleIdentifier>{}</sampleIdentifier>\n      </oai-identifier>\n    </description>\n",
        xml::OAI_IDENTIFIER_NS,
        xml::escape_text(src.repository_id()),
        xml::escape_text(&oai_identifier(src.repository_id(), "item1"))
    ));
    out.push_str("    <description>\n");
    write_archive_description(desc, &mut out, "      ");
    out.push_str("    </description>\n");
    out.push_str("  </Identify>\n");
    out
}

fn write_archive_description(desc: &ArchiveDescription, out: &mut String, indent: &str) {
    out.push_str(&format!("{indent}<olac-archive xmlns=\"{}\">\n", xml::OLAC_ARCHIVE_NS));
    desc.write_fields(out, &format!("{indent}  "));
    out.push_str(&format!("{indent}</olac-archive>\n"));
}

fn check_identifier(identifier: &str) -> Result<(), Failure> {
    if split_identifier(identifier).is_none() {
        return fail(
            ErrorCode::BadArgument,
            format!("`{identifier}` is not of the form oai:<repository>:<local id>"),
        );
    }
    Ok(())
}

fn list_metadata_formats(req: &ProtocolRequest, src: &dyn RepositorySource) -> Result<String, Failure> {
    if let Some(identifier) = req.get("identifier") {
        check_identifier(identifier)?;
        if src.get(identifier).is_none() {
            return fail(ErrorCode::IdDoesNotExist, format!("no record `{identifier}`"));
        }
    }
    let mut out = String::from("  <ListMetadataFormats>\n");
    for format in MetadataFormat::ALL {
        out.push_str(&format!(
            "    <metadataFormat>\n      <metadataPrefix>{}</metadataPrefix>\n      <schema>{}</schema>\n      <metadataNamespace>{}</metadataNamespace>\n    </metadataFormat>\n",
            format.prefix(),
            format.schema(),
            format.namespace()
        ));
    }
    out.push_str("  </ListMetadataFormats>\n");
    Ok(out)
}

fn list_sets(req: &ProtocolRequest, src: &dyn RepositorySource) -> Result<String, Failure> {
    if req.get("resumptionToken").is_some() {
        return fail(ErrorCode::BadResumptionToken, "set lists are never split");
    }
    let sets = src.sets();
    if sets.is_empty() {
        return fail(ErrorCode::NoSetHierarchy, "this repository does not define sets");
    }
    let mut out = String::from("  <ListSets>\n");
    for set in sets {
        out.push_str(&format!(
            "    <set>\n      <setSpec>{}</setSpec>\n      <setName>{}</setName>\n",
            xml::escape_text(&set.spec),
            xml::escape_text(&set.name)
        ));
        if let Some(desc) = &set.description {
            out.push_str("      <setDescription>\n");
            write_archive_description(desc, &mut out, "        ");
            out.push_str("      </setDescription>\n");
        }
        out.push_str("    </set>\n");
    }
    out.push_str("  </ListSets>\n");
    Ok(out)
}

fn format_arg(prefix: Option<&str>) -> Result<MetadataFormat, Failure> {
    let prefix = match prefix {
        Some(p) => p,
        None => return fail(ErrorCode::BadArgument, "metadataPrefix is required"),
    };
    MetadataFormat::from_prefix(prefix).ok_or_else(|| Failure {
        code: ErrorCode::CannotDisseminateFormat,
        message: format!("metadata format `{prefix}` is not supported"),
    })
}

fn get_record(
    req: &ProtocolRequest,
    src: &dyn RepositorySource,
    config: &ProviderConfig,
) -> Result<String, Failure> {
    let identifier = req
        .get("identifier")
        .ok_or_else(|| Failure {
            code: ErrorCode::BadArgument,
            message: "identifier is required".into(),
        })?;
    check_identifier(identifier)?;
    let format = format_arg(req.get("metadataPrefix"))?;
    let record = src.get(identifier).ok_or_else(|| Failure {
        code: ErrorCode::IdDoesNotExist,
        message: format!("no record `{identifier}`"),
    })?;
    let mut out = String::from("  <GetRecord>\n");
    write_record(&record, format, &config.profile, &mut out);
    out.push_str("  </GetRecord>\n");
    Ok(out)
}

enum Selection {
    Range {
        from: Option<Datestamp>,
        until: Option<Datestamp>,
        set: Option<String>,
    },
    Query(Query),
}

fn parse_selection(verb: Verb, args: &[(String, String)]) -> Result<(MetadataFormat, Selection), Failure> {
    let get = |name: &str| args.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
    if verb == Verb::Query {
        let format = format_arg(Some(get("metadataPrefix").unwrap_or("olac")))?;
        let (Some(sql), Some(elements)) = (get("sql"), get("elements")) else {
            return fail(ErrorCode::BadArgument, "Query needs both sql and elements");
        };
        let elements: usize = match elements.trim().parse() {
            Ok(n) if n >= 1 => n,
            _ => return fail(ErrorCode::BadArgument, "elements must be a positive integer"),
        };
        let parsed = query::parse_query(sql, elements).map_err(|e| Failure {
            code: ErrorCode::BadArgument,
            message: format!("sql: {e}"),
        })?;
        return Ok((format, Selection::Query(parsed)));
    }
    let format = format_arg(get("metadataPrefix"))?;
    let parse_date = |name: &str| -> Result<Option<(Datestamp, Granularity)>, Failure> {
        get(name)
            .map(|v| {
                Datestamp::parse_with_granularity(v).map_err(|e| Failure {
                    code: ErrorCode::BadArgument,
                    message: format!("{name}: {e}"),
                })
            })
            .transpose()
    };
    let from = parse_date("from")?;
    let until = parse_date("until")?;
    if let (Some((_, gf)), Some((_, gu))) = (from, until) {
        if gf != gu {
            return fail(ErrorCode::BadArgument, "from and until have different granularities");
        }
    }
    let from = from.map(|(d, _)| d);
    let until = until.map(|(d, g)| if g == Granularity::Day { d.end_of_day() } else { d });
    if let (Some(f), Some(u)) = (from, until) {
        if f > u {
            return fail(ErrorCode::BadArgument, "from is later than until");
        }
    }
    Ok((
        format,
        Selection::Range {
            from,
            until,
            set: get("set").map(str::to_string),
        },
    ))
}

fn list(
    verb: Verb,
    req: &ProtocolRequest,
    src: &dyn RepositorySource,
    config: &ProviderConfig,
    now: Datestamp,
) -> Result<String, Failure> {
    let bad_token = |message: &str| Failure {
        code: ErrorCode::BadResumptionToken,
        message: message.to_string(),
    };
    let (arguments, cursor, resumed) = match req.get("resumptionToken") {
        Some(text) => {
            let token = ResumptionToken::decode(text).ok_or_else(|| bad_token("the resumption token is not valid"))?;
            if token.verb != verb.name() {
                return Err(bad_token("the resumption token belongs to another verb"));
            }
            let others = req.arguments_without(&["verb", "resumptionToken"]);
            if !others.is_empty() && others != token.arguments {
                return Err(bad_token("the resumption token was issued for different arguments"));
            }
            if now > token.expires_at(config.token_expiry_hours) {
                return Err(bad_token("the resumption token has expired"));
            }
            (token.arguments, token.cursor, true)
        }
        None => (req.arguments_without(&["verb"]), 0, false),
    };

    let (format, selection) = parse_selection(verb, &arguments)?;
    let records = match &selection {
        Selection::Range { from, until, set } => {
            if set.is_some() && src.sets().is_empty() {
                return fail(ErrorCode::NoSetHierarchy, "this repository does not define sets");
            }
            src.select(*from, *until, set.as_deref())
        }
        Selection::Query(q) => src.query(q),
    };

    if records.is_empty() && !resumed {
        return fail(ErrorCode::NoRecordsMatch, "no records match the request");
    }
    if cursor >= records.len() {
        return Err(bad_token("the resumption token points past the end of the list"));
    }
    let end = (cursor + config.page_size).min(records.len());

    let container = if verb == Verb::ListIdentifiers { "ListIdentifiers" } else { "ListRecords" };
    let mut out = format!("  <{container}>\n");
    for record in &records[cursor..end] {
        if verb == Verb::ListIdentifiers {
            write_header(record, &mut out, "    ");
        } else {
            write_record(record, format, &config.profile, &mut out);
        }
    }
    if end < records.len() {
        let token = ResumptionToken::new(verb.name(), arguments, end, now, records.len());
        out.push_str(&format!(
            "    <resumptionToken completeListSize=\"{}\" cursor=\"{cursor}\" expirationDate=\"{}\">{}</resumptionToken>\n",
            records.len(),
            token.expires_at(config.token_expiry_hours),
            token.encode()
        ));
    } else if cursor > 0 {
        out.push_str(&format!(
            "    <resumptionToken completeListSize=\"{}\" cursor=\"{cursor}\"/>\n",
            records.len()
        ));
    }
    out.push_str(&format!("  </{container}>\n"));
    Ok(out)
}

fn write_header(record: &SourceRecord, out: &mut String, indent: &str) {
    if record.deleted {
        out.push_str(&format!("{indent}<header status=\"deleted\">\n"));
    } else {
        out.push_str(&format!("{indent}<header>\n"));
    }
    out.push_str(&format!(
        "{indent}  <identifier>{}</identifier>\n{indent}  <datestamp>{}</datestamp>\n",
        xml::escape_text(&record.identifier),
        record.datestamp
    ));
    for spec in &record.sets {
        out.push_str(&format!("{indent}  <setSpec>{}</setSpec>\n", xml::escape_text(spec)));
    }
    out.push_str(&format!("{indent}</header>\n"));
}

fn write_record(record: &SourceRecord, format: MetadataFormat, profile: &ApplicationProfile, out: &mut String) {
    out.push_str("    <record>\n");
    write_header(record, out, "      ");
    if let (false, Some(metadata)) = (record.deleted, &record.metadata) {
        let mut body = String::from("        ");
        let written = match format {
            MetadataFormat::Olac => model::write_record(metadata, &mut body, "        ").is_ok(),
            MetadataFormat::OaiDc => {
                crosswalk::write_oai_dc(&dumbdown_record(metadata, profile), &mut body, "        ");
                true
            }
        };
        if written {
            out.push_str("      <metadata>\n");
            out.push_str(&body);
            out.push_str("\n      </metadata>\n");
        }
    }
    out.push_str("    </record>\n");
}
