//! Qualified Dublin Core metadata records.
//!
//! A record is an ordered list of [`QualifiedElement`]s. Each element is one of
//! the fifteen DC elements, optionally refined through `xsi:type`, optionally
//! carrying a controlled-vocabulary code in the OLAC `code` attribute, and
//! optionally carrying free-text content. Attributes defined by third-party
//! extensions are kept verbatim in [`QualifiedElement::extra_attrs`].
//!
//! Refinements can also be written as elements of the DCMI terms namespace
//! (`<dcterms:alternative>`); such elements are stored under the DC element
//! they refine with `element_refinement` set, so that they serialize back in
//! the same form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

use crate::vocab::ApplicationProfile;
use crate::xml::{self, Position};

/// The fifteen elements of the Dublin Core element set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DcTag {
    Title,
    Creator,
    Subject,
    Description,
    Publisher,
    Contributor,
    Date,
    Type,
    Format,
    Identifier,
    Source,
    Language,
    Relation,
    Coverage,
    Rights,
}

impl DcTag {
    pub const ALL: [DcTag; 15] = [
        DcTag::Title,
        DcTag::Creator,
        DcTag::Subject,
        DcTag::Description,
        DcTag::Publisher,
        DcTag::Contributor,
        DcTag::Date,
        DcTag::Type,
        DcTag::Format,
        DcTag::Identifier,
        DcTag::Source,
        DcTag::Language,
        DcTag::Relation,
        DcTag::Coverage,
        DcTag::Rights,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DcTag::Title => "title",
            DcTag::Creator => "creator",
            DcTag::Subject => "subject",
            DcTag::Description => "description",
            DcTag::Publisher => "publisher",
            DcTag::Contributor => "contributor",
            DcTag::Date => "date",
            DcTag::Type => "type",
            DcTag::Format => "format",
            DcTag::Identifier => "identifier",
            DcTag::Source => "source",
            DcTag::Language => "language",
            DcTag::Relation => "relation",
            DcTag::Coverage => "coverage",
            DcTag::Rights => "rights",
        }
    }
}

impl fmt::Display for DcTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not a Dublin Core element")]
pub struct NotDcTag(pub String);

impl FromStr for DcTag {
    type Err = NotDcTag;

    // Case-sensitive: DC element names are lowercase.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DcTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| NotDcTag(s.to_string()))
    }
}

/// DCMI refinements recognised in element form and the DC element each one
/// refines. `audience` has no DC parent and is folded into `description`.
pub const DCTERMS_REFINEMENTS: &[(&str, DcTag)] = &[
    ("alternative", DcTag::Title),
    ("created", DcTag::Date),
    ("issued", DcTag::Date),
    ("modified", DcTag::Date),
    ("valid", DcTag::Date),
    ("available", DcTag::Date),
    ("dateAccepted", DcTag::Date),
    ("dateCopyrighted", DcTag::Date),
    ("dateSubmitted", DcTag::Date),
    ("extent", DcTag::Format),
    ("medium", DcTag::Format),
    ("isPartOf", DcTag::Relation),
    ("hasPart", DcTag::Relation),
    ("isVersionOf", DcTag::Relation),
    ("hasVersion", DcTag::Relation),
    ("isFormatOf", DcTag::Relation),
    ("hasFormat", DcTag::Relation),
    ("references", DcTag::Relation),
    ("isReferencedBy", DcTag::Relation),
    ("replaces", DcTag::Relation),
    ("isReplacedBy", DcTag::Relation),
    ("requires", DcTag::Relation),
    ("isRequiredBy", DcTag::Relation),
    ("conformsTo", DcTag::Relation),
    ("spatial", DcTag::Coverage),
    ("temporal", DcTag::Coverage),
    ("abstract", DcTag::Description),
    ("tableOfContents", DcTag::Description),
    ("bibliographicCitation", DcTag::Identifier),
    ("accessRights", DcTag::Rights),
    ("license", DcTag::Rights),
    ("audience", DcTag::Description),
];

pub fn dcterms_refinement_parent(local: &str) -> Option<DcTag> {
    DCTERMS_REFINEMENTS
        .iter()
        .find(|(name, _)| *name == local)
        .map(|(_, tag)| *tag)
}

/// A prefixed name such as `olac:language`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QName {
    pub prefix: String,
    pub local: String,
}

impl QName {
    pub fn new(prefix: impl Into<String>, local: impl Into<String>) -> Self {
        QName {
            prefix: prefix.into(),
            local: local.into(),
        }
    }
}

impl fmt::Display for QName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.prefix, self.local)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not a prefixed name")]
pub struct BadQName(pub String);

impl FromStr for QName {
    type Err = BadQName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((p, l)) if is_ncname(p) && is_ncname(l) => Ok(QName::new(p, l)),
            _ => Err(BadQName(s.to_string())),
        }
    }
}

fn is_ncname(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// One metadata statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualifiedElement {
    pub tag: DcTag,
    pub refinement_type: Option<QName>,
    /// Set when the refinement was written as the element name itself
    /// (`<dcterms:alternative>`) rather than through `xsi:type`.
    pub element_refinement: bool,
    pub code: Option<String>,
    pub content: String,
    pub xml_lang: Option<String>,
    pub extra_attrs: IndexMap<String, String>,
}

impl QualifiedElement {
    pub fn new(tag: DcTag, content: impl Into<String>) -> Self {
        QualifiedElement {
            tag,
            refinement_type: None,
            element_refinement: false,
            code: None,
            content: content.into(),
            xml_lang: None,
            extra_attrs: IndexMap::new(),
        }
    }

    pub fn typed(mut self, refinement: QName) -> Self {
        self.refinement_type = Some(refinement);
        self
    }

    pub fn coded(mut self, code: impl Into<String>) -> Self {
        self.code = Some(code.into());
        self
    }
}

/// An ordered list of elements plus the extension namespaces declared on the
/// record root. The `xsi` namespace is implicit and never listed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetadataRecord {
    pub elements: Vec<QualifiedElement>,
    pub namespace_decls: BTreeMap<String, String>,
}

impl MetadataRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(mut self, prefix: impl Into<String>, uri: impl Into<String>) -> Self {
        self.namespace_decls.insert(prefix.into(), uri.into());
        self
    }

    pub fn push(mut self, element: QualifiedElement) -> Self {
        self.elements.push(element);
        self
    }

    /// Namespace URI bound to `prefix` on this record.
    pub fn namespace_of(&self, prefix: &str) -> Option<&str> {
        self.namespace_decls.get(prefix).map(String::as_str)
    }

    fn olac_prefix(&self) -> Option<&str> {
        self.namespace_decls
            .iter()
            .find(|(_, uri)| xml::is_olac_namespace(uri))
            .map(|(p, _)| p.as_str())
    }
}

/// The four fields a standard harvester keeps from each element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementQuad {
    pub tag: String,
    pub content: String,
    pub type_: String,
    pub code: String,
}

impl ElementQuad {
    pub fn new(
        tag: impl Into<String>,
        content: impl Into<String>,
        type_: impl Into<String>,
        code: impl Into<String>,
    ) -> Self {
        ElementQuad {
            tag: tag.into(),
            content: content.into(),
            type_: type_.into(),
            code: code.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("malformed record at {position}: {message}")]
    Parse { position: Position, message: String },
    #[error("unknown element <{tag}> at {position}")]
    UnknownElement { tag: String, position: Position },
    #[error("no refinement is defined for `{tag}.{suffix}`")]
    UnknownRefinement { tag: String, suffix: String },
}

impl RecordError {
    pub(crate) fn from_xml(err: roxmltree::Error) -> Self {
        RecordError::Parse {
            position: xml::error_position(&err),
            message: err.to_string(),
        }
    }

    fn at(node: roxmltree::Node<'_, '_>, message: impl Into<String>) -> Self {
        RecordError::Parse {
            position: xml::node_position(node),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("namespace prefix `{0}` is used but not declared on the record")]
    UndeclaredPrefix(String),
    #[error("element carries a code but no OLAC namespace is declared")]
    MissingOlacNamespace,
    #[error("text contains characters that cannot appear in XML")]
    InvalidCharacter,
    #[error("attribute `{0}` is reserved")]
    ReservedAttribute(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy)]
enum Dialect<'p> {
    Current,
    Legacy(&'p ApplicationProfile),
}

/// Parses a record document (one root element, DC elements as children).
pub fn parse_record(doc: &str) -> Result<MetadataRecord, RecordError> {
    let document = xml::parse_document(doc).map_err(RecordError::from_xml)?;
    record_from_node(document.root_element(), Dialect::Current)
}

/// Reads the original dot-notation format (`<subject.language code="...">`)
/// into the current model. Dotless input is read exactly like
/// [`parse_record`].
pub fn upgrade_legacy_record(
    doc: &str,
    profile: &ApplicationProfile,
) -> Result<MetadataRecord, RecordError> {
    let document = xml::parse_document(doc).map_err(RecordError::from_xml)?;
    record_from_node(document.root_element(), Dialect::Legacy(profile))
}

/// Reads a record rooted at `root`, typically embedded in a larger document.
pub(crate) fn record_from_element(
    root: roxmltree::Node<'_, '_>,
) -> Result<MetadataRecord, RecordError> {
    record_from_node(root, Dialect::Current)
}

fn record_from_node(
    root: roxmltree::Node<'_, '_>,
    dialect: Dialect<'_>,
) -> Result<MetadataRecord, RecordError> {
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut extra_decls: BTreeMap<String, String> = BTreeMap::new();
    let mut elements = Vec::new();

    for node in root.children() {
        if node.is_text() {
            if node.text().is_some_and(|t| !t.trim().is_empty()) {
                return Err(RecordError::at(node, "unexpected text between elements"));
            }
            continue;
        }
        if !node.is_element() {
            continue;
        }
        elements.push(element_from_node(node, dialect, &mut used, &mut extra_decls)?);
    }

    let parent_scope: Vec<(Option<&str>, &str)> = root
        .parent_element()
        .map(|p| p.namespaces().map(|ns| (ns.name(), ns.uri())).collect())
        .unwrap_or_default();

    let mut namespace_decls = BTreeMap::new();
    for ns in root.namespaces() {
        let Some(prefix) = ns.name() else { continue };
        if prefix == "xml" || prefix == "xsi" || ns.uri() == xml::XSI_NS {
            continue;
        }
        let inherited = parent_scope.contains(&(Some(prefix), ns.uri()));
        if !inherited || used.contains(prefix) {
            namespace_decls.insert(prefix.to_string(), ns.uri().to_string());
        }
    }
    for (prefix, uri) in extra_decls {
        namespace_decls.entry(prefix).or_insert(uri);
    }

    Ok(MetadataRecord {
        elements,
        namespace_decls,
    })
}

fn element_from_node(
    node: roxmltree::Node<'_, '_>,
    dialect: Dialect<'_>,
    used: &mut BTreeSet<String>,
    extra_decls: &mut BTreeMap<String, String>,
) -> Result<QualifiedElement, RecordError> {
    let name = node.tag_name();
    let local = name.name();
    let position = xml::node_position(node);
    let unknown = |tag: String| RecordError::UnknownElement { tag, position };

    let mut element_refinement = None;
    let mut legacy_refinement = None;
    let tag = match name.namespace() {
        None | Some(xml::DC_NS) => match (dialect, local.split_once('.')) {
            (Dialect::Legacy(profile), Some((base, suffix))) => {
                let tag = DcTag::from_str(base).map_err(|_| unknown(local.to_string()))?;
                let olac_local = profile.legacy_refinement(suffix).ok_or_else(|| {
                    RecordError::UnknownRefinement {
                        tag: base.to_string(),
                        suffix: suffix.to_string(),
                    }
                })?;
                legacy_refinement = Some((olac_local.to_string(), profile.olac_namespace_uri.clone()));
                tag
            }
            _ => DcTag::from_str(local).map_err(|_| unknown(local.to_string()))?,
        },
        Some(xml::DCTERMS_NS) => {
            let parent = dcterms_refinement_parent(local)
                .ok_or_else(|| unknown(format!("dcterms:{local}")))?;
            let prefix = node
                .lookup_prefix(xml::DCTERMS_NS)
                .unwrap_or("dcterms")
                .to_string();
            if !used.contains(&prefix) && node.lookup_prefix(xml::DCTERMS_NS).is_none() {
                extra_decls.insert(prefix.clone(), xml::DCTERMS_NS.to_string());
            }
            used.insert(prefix.clone());
            element_refinement = Some(QName::new(prefix, local));
            parent
        }
        Some(uri) => {
            let shown = match node.lookup_prefix(uri) {
                Some(p) => format!("{p}:{local}"),
                None => local.to_string(),
            };
            return Err(unknown(shown));
        }
    };

    let mut element = QualifiedElement::new(tag, String::new());
    if let Some(q) = element_refinement {
        element.refinement_type = Some(q);
        element.element_refinement = true;
    }

    for attr in node.attributes() {
        match (attr.namespace(), attr.name()) {
            (Some(xml::XSI_NS), "type") => {
                if element.element_refinement {
                    return Err(RecordError::at(
                        node,
                        "a refinement element cannot also carry xsi:type",
                    ));
                }
                let q: QName = attr.value().trim().parse().map_err(|e: BadQName| {
                    RecordError::at(node, format!("xsi:type value {e}"))
                })?;
                if node.lookup_namespace_uri(Some(&q.prefix)).is_none() {
                    return Err(RecordError::at(
                        node,
                        format!("xsi:type uses undeclared prefix `{}`", q.prefix),
                    ));
                }
                used.insert(q.prefix.clone());
                element.refinement_type = Some(q);
            }
            (Some(uri), "code") if xml::is_olac_namespace(uri) => {
                if let Some(p) = node.lookup_prefix(uri) {
                    used.insert(p.to_string());
                }
                element.code = Some(attr.value().to_string());
            }
            (None, "code") if legacy_refinement.is_some() => {
                element.code = Some(attr.value().to_string());
            }
            (Some(xml::XML_NS), "lang") => {
                element.xml_lang = Some(attr.value().to_string());
            }
            (Some(uri), local_attr) => {
                let prefix = node.lookup_prefix(uri).ok_or_else(|| {
                    RecordError::at(node, format!("attribute `{local_attr}` has no prefix"))
                })?;
                used.insert(prefix.to_string());
                element
                    .extra_attrs
                    .insert(format!("{prefix}:{local_attr}"), attr.value().to_string());
            }
            (None, local_attr) => {
                element
                    .extra_attrs
                    .insert(local_attr.to_string(), attr.value().to_string());
            }
        }
    }

    if let Some((olac_local, olac_uri)) = legacy_refinement {
        let prefix = node
            .lookup_prefix(&olac_uri)
            .unwrap_or("olac")
            .to_string();
        extra_decls.entry(prefix.clone()).or_insert(olac_uri);
        used.insert(prefix.clone());
        element.refinement_type = Some(QName::new(prefix, olac_local));
    }

    for c in node.children() {
        if c.is_element() {
            return Err(RecordError::at(
                c,
                format!("<{}> may not contain child elements", local),
            ));
        }
    }
    element.content = xml::text_of(node);
    Ok(element)
}

/// Writes `rec` as a standalone document.
pub fn serialize_record(rec: &MetadataRecord) -> Result<String, SerializeError> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write_record(rec, &mut out, "")?;
    out.push('\n');
    Ok(out)
}

/// Writes the record root element into `out`, indenting children by
/// `indent` plus two spaces.
pub(crate) fn write_record(
    rec: &MetadataRecord,
    out: &mut String,
    indent: &str,
) -> Result<(), SerializeError> {
    let olac_prefix = rec.olac_prefix();
    let root = match olac_prefix {
        Some(p) => format!("{p}:olac"),
        None => "olac".to_string(),
    };
    let mut body = String::new();
    for element in &rec.elements {
        body.push_str(indent);
        body.push_str("  ");
        write_element(rec, element, olac_prefix, &mut body)?;
        body.push('\n');
    }

    out.push('<');
    out.push_str(&root);
    out.push_str(&format!(" xmlns=\"{}\"", xml::DC_NS));
    out.push_str(&format!(" xmlns:xsi=\"{}\"", xml::XSI_NS));
    for (prefix, uri) in &rec.namespace_decls {
        if prefix == "xsi" || prefix == "xml" || !is_ncname(prefix) {
            return Err(SerializeError::Invalid(format!(
                "cannot declare namespace prefix `{prefix}`"
            )));
        }
        check_text(uri)?;
        out.push_str(&format!(" xmlns:{}=\"{}\"", prefix, xml::escape_attr(uri)));
    }
    if rec.elements.is_empty() {
        out.push_str("/>");
    } else {
        out.push_str(">\n");
        out.push_str(&body);
        out.push_str(indent);
        out.push_str(&format!("</{root}>"));
    }
    Ok(())
}

fn check_text(s: &str) -> Result<(), SerializeError> {
    if xml::is_xml_text(s) {
        Ok(())
    } else {
        Err(SerializeError::InvalidCharacter)
    }
}

fn check_prefix(rec: &MetadataRecord, prefix: &str) -> Result<(), SerializeError> {
    if prefix == "xsi" || prefix == "xml" || rec.namespace_decls.contains_key(prefix) {
        Ok(())
    } else {
        Err(SerializeError::UndeclaredPrefix(prefix.to_string()))
    }
}

fn write_element(
    rec: &MetadataRecord,
    element: &QualifiedElement,
    olac_prefix: Option<&str>,
    out: &mut String,
) -> Result<(), SerializeError> {
    let name = match (&element.refinement_type, element.element_refinement) {
        (Some(q), true) => {
            check_prefix(rec, &q.prefix)?;
            if rec.namespace_of(&q.prefix) != Some(xml::DCTERMS_NS)
                || dcterms_refinement_parent(&q.local) != Some(element.tag)
            {
                return Err(SerializeError::Invalid(format!(
                    "`{q}` is not a DCMI refinement of {}",
                    element.tag
                )));
            }
            q.to_string()
        }
        (None, true) => {
            return Err(SerializeError::Invalid(
                "element refinement without a refinement type".into(),
            ))
        }
        _ => element.tag.as_str().to_string(),
    };
    out.push('<');
    out.push_str(&name);

    if let (Some(q), false) = (&element.refinement_type, element.element_refinement) {
        check_prefix(rec, &q.prefix)?;
        out.push_str(&format!(" xsi:type=\"{}\"", xml::escape_attr(&q.to_string())));
    }
    if let Some(code) = &element.code {
        let prefix = olac_prefix.ok_or(SerializeError::MissingOlacNamespace)?;
        check_text(code)?;
        out.push_str(&format!(" {prefix}:code=\"{}\"", xml::escape_attr(code)));
    }
    if let Some(lang) = &element.xml_lang {
        check_text(lang)?;
        out.push_str(&format!(" xml:lang=\"{}\"", xml::escape_attr(lang)));
    }
    for (attr, value) in &element.extra_attrs {
        let reserved = attr == "xsi:type"
            || attr == "xml:lang"
            || olac_prefix.is_some_and(|p| attr == &format!("{p}:code"))
            || attr.starts_with("xmlns");
        if reserved {
            return Err(SerializeError::ReservedAttribute(attr.clone()));
        }
        match attr.split_once(':') {
            Some((p, l)) if is_ncname(p) && is_ncname(l) => check_prefix(rec, p)?,
            None if is_ncname(attr) => {}
            _ => {
                return Err(SerializeError::Invalid(format!(
                    "`{attr}` is not an attribute name"
                )))
            }
        }
        check_text(value)?;
        out.push_str(&format!(" {attr}=\"{}\"", xml::escape_attr(value)));
    }

    check_text(&element.content)?;
    if element.content.is_empty() {
        out.push_str("/>");
    } else {
        out.push('>');
        out.push_str(&xml::escape_text(&element.content));
        out.push_str(&format!("</{name}>"));
    }
    Ok(())
}

/// Projects each element onto (tag, content, type, code). Extension
/// attributes are not part of the projection.
pub fn extract_quads(rec: &MetadataRecord) -> Vec<ElementQuad> {
    rec.elements
        .iter()
        .map(|e| ElementQuad {
            tag: e.tag.as_str().to_string(),
            content: e.content.clone(),
            type_: e
                .refinement_type
                .as_ref()
                .map(QName::to_string)
                .unwrap_or_default(),
            code: e.code.clone().unwrap_or_default(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPENDIX: &str = include_str!("../fixtures/appendix.xml");

    #[test]
    fn appendix_record_parses_in_document_order() {
        let rec = parse_record(APPENDIX).unwrap();
        assert_eq!(rec.elements.len(), 12);
        let editor = &rec.elements[1];
        assert_eq!(editor.tag, DcTag::Contributor);
        assert_eq!(editor.refinement_type, Some(QName::new("olac", "role")));
        assert_eq!(editor.code.as_deref(), Some("editor"));
        assert_eq!(editor.content, "Sapir, Edward");

        let speech = &rec.elements[7];
        assert_eq!(speech.tag, DcTag::Format);
        let attrs: Vec<_> = speech
            .extra_attrs
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        assert_eq!(attrs, [("rate", "8000"), ("channels", "2"), ("coding", "ULAW")]);

        let alternative = &rec.elements[9];
        assert_eq!(alternative.tag, DcTag::Title);
        assert!(alternative.element_refinement);
        assert_eq!(alternative.content, "ALTERNATIVE TITLE");

        assert_eq!(
            rec.namespace_decls.keys().map(String::as_str).collect::<Vec<_>>(),
            ["as-formosan", "dcterms", "netdc", "olac", "software"]
        );
    }

    #[test]
    fn minimal_record() {
        let rec = parse_record("<olac><title>TITLE</title></olac>").unwrap();
        assert_eq!(rec.elements, vec![QualifiedElement::new(DcTag::Title, "TITLE")]);
        assert_eq!(
            extract_quads(&rec),
            vec![ElementQuad::new("title", "TITLE", "", "")]
        );
    }

    #[test]
    fn unknown_tag_is_named() {
        let err = parse_record("<olac>\n  <flavor>x</flavor></olac>").unwrap_err();
        match err {
            RecordError::UnknownElement { tag, position } => {
                assert_eq!(tag, "flavor");
                assert_eq!(position.line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tag_comparison_is_case_sensitive() {
        assert!(matches!(
            parse_record("<olac><Title>x</Title></olac>"),
            Err(RecordError::UnknownElement { .. })
        ));
    }

    #[test]
    fn malformed_markup_reports_position() {
        let err = parse_record("<olac>\n<title>x</titl></olac>").unwrap_err();
        match err {
            RecordError::Parse { position, .. } => assert_eq!(position.line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_are_ignored() {
        let rec = parse_record("<olac><!-- c --><title>a</title><!-- d --></olac>").unwrap();
        assert_eq!(rec.elements.len(), 1);
    }

    #[test]
    fn quads_of_coded_and_scheme_elements() {
        let rec = parse_record(APPENDIX).unwrap();
        let quads = extract_quads(&rec);
        assert_eq!(quads.len(), rec.elements.len());
        assert_eq!(
            quads[0],
            ElementQuad::new("subject", "", "olac:linguistic-field", "phonology")
        );
        assert_eq!(
            quads[10],
            ElementQuad::new("date", "1963-09-14", "dcterms:W3CDTF", "")
        );
    }

    #[test]
    fn appendix_round_trips() {
        let rec = parse_record(APPENDIX).unwrap();
        let text = serialize_record(&rec).unwrap();
        assert_eq!(parse_record(&text).unwrap(), rec);
    }

    #[test]
    fn empty_record_round_trips() {
        let text = serialize_record(&MetadataRecord::new()).unwrap();
        assert!(text.contains("<olac xmlns="));
        assert_eq!(parse_record(&text).unwrap(), MetadataRecord::new());
    }

    #[test]
    fn undeclared_prefix_cannot_be_serialized() {
        let rec = MetadataRecord::new()
            .push(QualifiedElement::new(DcTag::Subject, "x").typed(QName::new("olac", "language")));
        assert_eq!(
            serialize_record(&rec),
            Err(SerializeError::UndeclaredPrefix("olac".into()))
        );
    }

    #[test]
    fn code_needs_olac_namespace() {
        let rec = MetadataRecord::new().push(QualifiedElement::new(DcTag::Subject, "").coded("x"));
        assert_eq!(serialize_record(&rec), Err(SerializeError::MissingOlacNamespace));
    }

    #[test]
    fn qname_parsing() {
        assert_eq!("olac:role".parse::<QName>(), Ok(QName::new("olac", "role")));
        assert!("role".parse::<QName>().is_err());
        assert!(":role".parse::<QName>().is_err());
    }
}
