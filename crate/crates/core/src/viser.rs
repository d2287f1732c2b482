//! Viser: web pages over aggregator queries.
//!
//! A listing request (`elements`, `sql`, `title`, optional `template`, or a
//! `resumptionToken`) becomes a Query against the aggregator and an HTML
//! page with one item per record and a "More resources ..." link while the
//! aggregator has more. Every record also has a plain page at
//! `/record/<percent-encoded identifier>` for crawlers.
//!
//! Templates are text with placeholders:
//!
//! ```text
//! {{title}}  {{more}}  {{empty}}
//! {{#items}} ... {{item.title}} {{item.archive}} {{item.identifier}} {{item.link}} ... {{/items}}
//! ```
//!
//! `{{title}}`, the item loop and `{{more}}` are required. Everything
//! substituted is HTML-escaped.

use std::collections::HashMap;
use std::fmt::Write as _;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use thiserror::Error;

use crate::crosswalk::{dumbdown_element, dumbdown_record};
use crate::description::ArchiveDescription;
use crate::model::{DcTag, MetadataRecord, QualifiedElement};
use crate::provider::response::{parse_list_response, parse_list_sets, ListedRecord, ResponseError};
use crate::provider::split_identifier;
use crate::provider::vida::{FetchError, Fetcher};
use crate::provider::ProtocolRequest;
use crate::vocab::ApplicationProfile;
use crate::xml;

/// Sends protocol requests to the aggregator.
pub trait AggregatorClient: Send + Sync {
    fn request(&self, req: &ProtocolRequest) -> Result<String, FetchError>;
}

impl<F> AggregatorClient for F
where
    F: Fn(&ProtocolRequest) -> Result<String, FetchError> + Send + Sync,
{
    fn request(&self, req: &ProtocolRequest) -> Result<String, FetchError> {
        self(req)
    }
}

#[derive(Debug, Clone)]
pub struct ViserConfig {
    /// URL of the listing endpoint; record pages live below it.
    pub base_url: String,
    pub profile: std::sync::Arc<ApplicationProfile>,
}

impl ViserConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        ViserConfig {
            base_url: base_url.into(),
            profile: std::sync::Arc::new(ApplicationProfile::shipped()),
        }
    }

    pub fn record_url(&self, identifier: &str) -> String {
        format!(
            "{}/record/{}",
            self.base_url.trim_end_matches('/'),
            utf8_percent_encode(identifier, NON_ALPHANUMERIC)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViserRequest {
    pub elements: Option<usize>,
    pub sql: Option<String>,
    pub title: String,
    pub template: Option<String>,
    pub resumption_token: Option<String>,
}

impl ViserRequest {
    pub fn query(elements: usize, sql: &str, title: &str) -> Self {
        ViserRequest {
            elements: Some(elements),
            sql: Some(sql.to_string()),
            title: title.to_string(),
            ..Default::default()
        }
    }

    /// Reads the endpoint parameters. Either `sql` and `elements`, or a
    /// resumption token, must be present.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, String> {
        let mut req = ViserRequest::default();
        let mut elements = None;
        for (k, v) in pairs {
            match k {
                "elements" => elements = Some(v.to_string()),
                "sql" => req.sql = Some(v.to_string()),
                "title" => req.title = v.to_string(),
                "template" | "xsl" => req.template = Some(v.to_string()).filter(|t| !t.is_empty()),
                "resumptionToken" => req.resumption_token = Some(v.to_string()),
                other => return Err(format!("unknown parameter `{other}`")),
            }
        }
        if let Some(e) = elements {
            req.elements = Some(
                e.trim()
                    .parse()
                    .ok()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| format!("elements must be a positive integer, not `{e}`"))?,
            );
        }
        if req.resumption_token.is_none() && (req.sql.is_none() || req.elements.is_none()) {
            return Err("a query needs both sql and elements, or a resumptionToken".into());
        }
        Ok(req)
    }

    pub fn from_query_string(qs: &str) -> Result<Self, String> {
        let pairs: Vec<(String, String)> = url::form_urlencoded::parse(qs.as_bytes()).into_owned().collect();
        ViserRequest::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    fn protocol_request(&self) -> ProtocolRequest {
        match &self.resumption_token {
            Some(token) => ProtocolRequest::new("Query").arg("resumptionToken", token),
            None => ProtocolRequest::new("Query")
                .arg("sql", self.sql.as_deref().unwrap_or(""))
                .arg("elements", &self.elements.unwrap_or(1).to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingItem {
    pub display_title: String,
    pub archive_name: String,
    pub identifier: String,
    pub link: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingPage {
    pub title: String,
    pub items: Vec<ListingItem>,
    pub more_link: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPage {
    pub status: u16,
    pub html: String,
    /// Whether the page may be cached by clients and crawlers.
    pub cacheable: bool,
}

impl RenderedPage {
    fn ok(html: String) -> Self {
        RenderedPage {
            status: 200,
            html,
            cacheable: false,
        }
    }
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

pub fn error_page(status: u16, heading: &str, detail: &str) -> RenderedPage {
    RenderedPage {
        status,
        html: format!(
            "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>{h}</title></head>\n<body>\n<h1>{h}</h1>\n<p class=\"error\">{d}</p>\n</body>\n</html>\n",
            h = escape_html(heading),
            d = escape_html(detail)
        ),
        cacheable: false,
    }
}

/// Best display title: first non-empty title content, then the dumbed-down
/// title, then the identifier.
pub fn display_title(rec: Option<&MetadataRecord>, identifier: &str, profile: &ApplicationProfile) -> String {
    let Some(rec) = rec else {
        return identifier.to_string();
    };
    rec.elements
        .iter()
        .find(|e| e.tag == DcTag::Title && !e.content.trim().is_empty())
        .map(|e| e.content.trim().to_string())
        .or_else(|| dumbdown_record(rec, profile).first(DcTag::Title).map(|t| t.trim().to_string()))
        .unwrap_or_else(|| identifier.to_string())
}

fn archive_names(agg: &dyn AggregatorClient) -> HashMap<String, ArchiveDescription> {
    agg.request(&ProtocolRequest::new("ListSets"))
        .ok()
        .and_then(|text| parse_list_sets(&text).ok())
        .unwrap_or_default()
        .into_iter()
        .map(|s| {
            let desc = s.description.unwrap_or_else(|| ArchiveDescription {
                archive_name: s.name.clone(),
                ..Default::default()
            });
            (s.spec, desc)
        })
        .collect()
}

fn archive_of(record: &ListedRecord) -> String {
    record
        .sets
        .first()
        .cloned()
        .or_else(|| split_identifier(&record.identifier).map(|(repo, _)| repo.to_string()))
        .unwrap_or_default()
}

/// Runs the query and builds the page model.
pub fn build_listing(
    req: &ViserRequest,
    agg: &dyn AggregatorClient,
    config: &ViserConfig,
) -> Result<ListingPage, RenderedPage> {
    let text = agg
        .request(&req.protocol_request())
        .map_err(|e| error_page(502, "Aggregator unavailable", &e.to_string()))?;
    let response = match parse_list_response(&text) {
        Ok(r) => r,
        Err(e) if e.protocol_code() == Some("noRecordsMatch") => Default::default(),
        Err(ResponseError::Protocol { code, message }) if code == "badArgument" || code == "badResumptionToken" => {
            return Err(error_page(400, "Invalid query", &message))
        }
        Err(e) => return Err(error_page(502, "Aggregator error", &e.to_string())),
    };
    let archives = if response.records.is_empty() { HashMap::new() } else { archive_names(agg) };
    let items = response
        .records
        .iter()
        .map(|r| {
            let archive = archive_of(r);
            ListingItem {
                display_title: display_title(r.metadata.as_ref(), &r.identifier, &config.profile),
                archive_name: archives
                    .get(&archive)
                    .map(|d| d.archive_name.clone())
                    .filter(|n| !n.is_empty())
                    .unwrap_or(archive),
                identifier: r.identifier.clone(),
                link: config.record_url(&r.identifier),
            }
        })
        .collect();
    let more_link = response.resumption_token.map(|token| {
        let mut qs = url::form_urlencoded::Serializer::new(String::new());
        qs.append_pair("resumptionToken", &token);
        qs.append_pair("title", &req.title);
        if let Some(t) = &req.template {
            qs.append_pair("template", t);
        }
        format!("{}?{}", config.base_url, qs.finish())
    });
    Ok(ListingPage {
        title: req.title.clone(),
        items,
        more_link,
    })
}

/// Renders a listing page, with the custom template when one is given and
/// usable.
pub fn render_listing(
    req: &ViserRequest,
    agg: &dyn AggregatorClient,
    templates: &dyn Fetcher,
    config: &ViserConfig,
) -> RenderedPage {
    let page = match build_listing(req, agg, config) {
        Ok(page) => page,
        Err(error) => return error,
    };
    let custom = req.template.as_ref().map(|location| {
        templates
            .fetch(location)
            .map_err(|e| TemplateError::Unavailable(e.to_string()))
            .and_then(|text| apply_template(&text, &page))
    });
    match custom {
        Some(Ok(html)) => RenderedPage::ok(html),
        Some(Err(e)) => {
            let mut html = apply_template(DEFAULT_TEMPLATE, &page).expect("default template is valid");
            let _ = writeln!(html, "<!-- warning: custom template not used: {} -->", escape_comment(&e.to_string()));
            RenderedPage::ok(html)
        }
        None => RenderedPage::ok(apply_template(DEFAULT_TEMPLATE, &page).expect("default template is valid")),
    }
}

fn escape_comment(s: &str) -> String {
    escape_html(s).replace("--", "- -")
}

pub const DEFAULT_TEMPLATE: &str = "<!DOCTYPE html>
<html>
<head><meta charset=\"utf-8\"><title>{{title}}</title></head>
<body>
<h1>{{title}}</h1>
{{empty}}<ul class=\"results\">
{{#items}}<li><a href=\"{{item.link}}\">{{item.title}}</a> <span class=\"archive\">{{item.archive}}</span></li>
{{/items}}</ul>
{{more}}
</body>
</html>
";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template unavailable: {0}")]
    Unavailable(String),
    #[error("unknown placeholder `{{{{{0}}}}}`")]
    UnknownPlaceholder(String),
    #[error("template lacks `{{{{{0}}}}}`")]
    Missing(&'static str),
    #[error("unbalanced `{0}`")]
    Unbalanced(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Title,
    More,
    Empty,
    ItemTitle,
    ItemArchive,
    ItemIdentifier,
    ItemLink,
    Items(Vec<Piece>),
}

fn parse_template(text: &str) -> Result<Vec<Piece>, TemplateError> {
    let mut stack: Vec<Vec<Piece>> = vec![Vec::new()];
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        if start > 0 {
            stack.last_mut().unwrap().push(Piece::Text(rest[..start].to_string()));
        }
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| TemplateError::Unbalanced("{{".into()))?;
        let name = after[..end].trim();
        rest = &after[end + 2..];
        let in_loop = stack.len() > 1;
        let piece = match name {
            "title" => Piece::Title,
            "more" => Piece::More,
            "empty" => Piece::Empty,
            "item.title" if in_loop => Piece::ItemTitle,
            "item.archive" if in_loop => Piece::ItemArchive,
            "item.identifier" if in_loop => Piece::ItemIdentifier,
            "item.link" if in_loop => Piece::ItemLink,
            "#items" if !in_loop => {
                stack.push(Vec::new());
                continue;
            }
            "/items" if in_loop => {
                let body = stack.pop().unwrap();
                Piece::Items(body)
            }
            "#items" | "/items" => return Err(TemplateError::Unbalanced(name.to_string())),
            other => return Err(TemplateError::UnknownPlaceholder(other.to_string())),
        };
        stack.last_mut().unwrap().push(piece);
    }
    if !rest.is_empty() {
        stack.last_mut().unwrap().push(Piece::Text(rest.to_string()));
    }
    if stack.len() != 1 {
        return Err(TemplateError::Unbalanced("#items".into()));
    }
    let pieces = stack.pop().unwrap();
    for (needed, found) in [
        ("title", pieces.contains(&Piece::Title)),
        ("#items", pieces.iter().any(|p| matches!(p, Piece::Items(_)))),
        ("more", pieces.contains(&Piece::More)),
    ] {
        if !found {
            return Err(TemplateError::Missing(needed));
        }
    }
    Ok(pieces)
}

/// Expands a template for `page`. Output is a pure function of the two.
pub fn apply_template(template: &str, page: &ListingPage) -> Result<String, TemplateError> {
    let pieces = parse_template(template)?;
    let mut out = String::new();
    expand(&pieces, page, None, &mut out);
    Ok(out)
}

fn expand(pieces: &[Piece], page: &ListingPage, item: Option<&ListingItem>, out: &mut String) {
    for piece in pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Title => out.push_str(&escape_html(&page.title)),
            Piece::More => {
                if let Some(link) = &page.more_link {
                    let _ = write!(out, "<a class=\"more\" href=\"{}\">More resources ...</a>", escape_html(link));
                }
            }
            Piece::Empty => {
                if page.items.is_empty() {
                    out.push_str("<p class=\"empty\">No matching resources.</p>\n");
                }
            }
            Piece::Items(body) => {
                for it in &page.items {
                    expand(body, page, Some(it), out);
                }
            }
            Piece::ItemTitle => out.push_str(&escape_html(&item.unwrap().display_title)),
            Piece::ItemArchive => out.push_str(&escape_html(&item.unwrap().archive_name)),
            Piece::ItemIdentifier => out.push_str(&escape_html(&item.unwrap().identifier)),
            Piece::ItemLink => out.push_str(&escape_html(&item.unwrap().link)),
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Field label such as `Contributor (Editor)` or `Title (alternative)`.
fn field_label(rec: &MetadataRecord, element: &QualifiedElement, tag: DcTag, profile: &ApplicationProfile) -> String {
    let base = capitalize(tag.as_str());
    let qualifier = match &element.refinement_type {
        Some(q) => {
            let uri = rec.namespace_of(&q.prefix);
            match (&element.code, uri) {
                (Some(code), Some(uri)) if uri == profile.olac_namespace_uri => {
                    // a code without content is already shown as its label
                    if element.content.trim().is_empty() {
                        None
                    } else {
                        Some(profile.label(&q.local, code).unwrap_or(code).to_string())
                    }
                }
                (_, Some(xml::DCTERMS_NS)) if element.element_refinement => Some(q.local.clone()),
                _ => None,
            }
        }
        None => None,
    };
    match qualifier {
        Some(q) => format!("{base} ({q})"),
        None => base,
    }
}

/// A crawler-friendly page for one record.
pub fn render_record_page(identifier: &str, agg: &dyn AggregatorClient, config: &ViserConfig) -> RenderedPage {
    let req = ProtocolRequest::new("GetRecord")
        .arg("identifier", identifier)
        .arg("metadataPrefix", "olac");
    let text = match agg.request(&req) {
        Ok(text) => text,
        Err(e) => return error_page(502, "Aggregator unavailable", &e.to_string()),
    };
    let record = match parse_list_response(&text) {
        Ok(resp) => match resp.records.into_iter().next() {
            Some(r) => r,
            None => return error_page(404, "Record not found", "The aggregator has no such record."),
        },
        Err(e) if matches!(e.protocol_code(), Some("idDoesNotExist") | Some("badArgument")) => {
            return error_page(404, "Record not found", "The aggregator has no such record.")
        }
        Err(e) => return error_page(502, "Aggregator error", &e.to_string()),
    };
    let archives = archive_names(agg);
    let archive_id = archive_of(&record);
    let archive = archives.get(&archive_id);
    let profile = &config.profile;

    let mut html = String::from("<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\">");
    let heading = match &record.metadata {
        Some(md) if !record.deleted => display_title(Some(md), "Untitled record", profile),
        _ => "Withdrawn record".to_string(),
    };
    let _ = write!(html, "<title>{}</title></head>\n<body>\n", escape_html(&heading));
    let _ = writeln!(
        html,
        "<article class=\"record\" data-oai-identifier=\"{}\" data-datestamp=\"{}\">",
        escape_html(&record.identifier),
        record.datestamp
    );
    let _ = writeln!(html, "<h1>{}</h1>", escape_html(&heading));
    match (&record.metadata, record.deleted) {
        (Some(md), false) => {
            html.push_str("<dl class=\"fields\">\n");
            for element in &md.elements {
                if let Some((tag, value)) = dumbdown_element(md, element, profile) {
                    let _ = writeln!(
                        html,
                        "<dt>{}</dt><dd>{}</dd>",
                        escape_html(&field_label(md, element, tag, profile)),
                        escape_html(&value)
                    );
                }
            }
            html.push_str("</dl>\n");
        }
        _ => html.push_str("<p class=\"withdrawn\">This record was withdrawn by its archive.</p>\n"),
    }
    html.push_str("<section class=\"archive\">\n<h2>Source archive</h2>\n");
    match archive {
        Some(desc) => {
            let _ = writeln!(
                html,
                "<p><a href=\"{}\">{}</a></p>",
                escape_html(&desc.archive_url),
                escape_html(if desc.archive_name.is_empty() { &archive_id } else { &desc.archive_name })
            );
            if !desc.curator.is_empty() {
                let _ = writeln!(html, "<p>Curator: {}</p>", escape_html(&desc.curator));
            }
            if !desc.institution_name.is_empty() {
                let _ = writeln!(html, "<p>Institution: {}</p>", escape_html(&desc.institution_name));
            }
        }
        None => {
            let _ = writeln!(html, "<p>{}</p>", escape_html(&archive_id));
        }
    }
    html.push_str("</section>\n</article>\n</body>\n</html>\n");
    RenderedPage {
        status: 200,
        html,
        cacheable: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(n: usize, more: bool) -> ListingPage {
        ListingPage {
            title: "Swahili Language Resources".into(),
            items: (0..n)
                .map(|i| ListingItem {
                    display_title: format!("Item {i}"),
                    archive_name: "Demo".into(),
                    identifier: format!("oai:demo:{i}"),
                    link: format!("http://v/record/oai%3Ademo%3A{i}"),
                })
                .collect(),
            more_link: more.then(|| "http://v/?resumptionToken=abc&title=x".to_string()),
        }
    }

    #[test]
    fn default_template_lists_items() {
        let html = apply_template(DEFAULT_TEMPLATE, &page(2, false)).unwrap();
        assert_eq!(html.matches("<a href=").count(), 2);
        assert!(html.contains("<title>Swahili Language Resources</title>"));
        assert!(!html.contains("More resources"));
        assert!(!html.contains("class=\"empty\""));

        let html = apply_template(DEFAULT_TEMPLATE, &page(0, false)).unwrap();
        assert!(html.contains("No matching resources."));

        let html = apply_template(DEFAULT_TEMPLATE, &page(1, true)).unwrap();
        assert!(html.contains("href=\"http://v/?resumptionToken=abc&amp;title=x\">More resources ...</a>"));
    }

    #[test]
    fn template_validation() {
        assert_eq!(
            apply_template("{{title}} {{more}}", &page(1, false)),
            Err(TemplateError::Missing("#items"))
        );
        assert_eq!(
            apply_template("{{title}}{{#items}}{{item.colour}}{{/items}}{{more}}", &page(1, false)),
            Err(TemplateError::UnknownPlaceholder("item.colour".into()))
        );
        assert_eq!(
            apply_template("{{title}}{{item.title}}{{#items}}{{/items}}{{more}}", &page(1, false)),
            Err(TemplateError::UnknownPlaceholder("item.title".into()))
        );
        assert!(matches!(
            apply_template("{{title}}{{#items}}{{more}}", &page(1, false)),
            Err(TemplateError::Unbalanced(_))
        ));
        let custom = apply_template("[{{title}}]{{#items}}<{{item.identifier}}>{{/items}}{{more}}", &page(2, false)).unwrap();
        assert_eq!(custom, "[Swahili Language Resources]<oai:demo:0><oai:demo:1>");
    }

    #[test]
    fn record_text_is_escaped() {
        let mut p = page(1, false);
        p.items[0].display_title = "<script>alert(1)</script>".into();
        p.title = "\"><img src=x>".into();
        let html = apply_template(DEFAULT_TEMPLATE, &p).unwrap();
        assert!(!html.contains("<script>"));
        assert!(!html.contains("<img"));
        assert!(html.contains("&lt;script&gt;"));
    }

    #[test]
    fn request_parameters() {
        let req = ViserRequest::from_query_string(
            "elements=1&sql=e1.code%3D'x-sil-SWA'&title=Swahili+Language+Resources",
        )
        .unwrap();
        assert_eq!(req, ViserRequest::query(1, "e1.code='x-sil-SWA'", "Swahili Language Resources"));
        assert!(ViserRequest::from_query_string("title=x").is_err());
        assert!(ViserRequest::from_query_string("elements=0&sql=x").is_err());
        assert!(ViserRequest::from_query_string("resumptionToken=abc").is_ok());
    }

    #[test]
    fn record_urls_are_percent_encoded() {
        let config = ViserConfig::new("http://v/");
        assert_eq!(config.record_url("oai:demo:a b"), "http://v/record/oai%3Ademo%3Aa%20b");
    }
}
