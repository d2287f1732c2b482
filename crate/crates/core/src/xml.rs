//! Small XML helpers shared by the readers and writers in this crate.
//!
//! Reading goes through `roxmltree`; writing is plain string assembly with
//! the escaping rules below.

use std::fmt;

/// Dublin Core element set (simple DC) namespace.
pub const DC_NS: &str = "http://purl.org/dc/elements/1.1/";
/// DCMI terms namespace (refinements and encoding schemes).
pub const DCTERMS_NS: &str = "http://purl.org/dc/terms/";
/// OLAC namespace used by the shipped application profile.
pub const OLAC_NS: &str = "http://www.language-archives.org/OLAC/1.0bl/olac.xsd";
/// Prefix shared by every OLAC namespace revision.
pub const OLAC_NS_FAMILY: &str = "http://www.language-archives.org/OLAC/";
pub const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";
pub const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";
pub const OAI_NS: &str = "http://www.openarchives.org/OAI/2.0/";
pub const OAI_DC_NS: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
pub const OAI_IDENTIFIER_NS: &str = "http://www.openarchives.org/OAI/2.0/oai-identifier";
/// Namespace of the archive description block carried in Identify.
pub const OLAC_ARCHIVE_NS: &str = "http://www.language-archives.org/OLAC/1.0/olac-archive";

pub fn is_olac_namespace(uri: &str) -> bool {
    uri.starts_with(OLAC_NS_FAMILY)
}

/// Line/column location inside a parsed document (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

pub fn node_position(node: roxmltree::Node<'_, '_>) -> Position {
    let pos = node.document().text_pos_at(node.range().start);
    Position {
        line: pos.row,
        column: pos.col,
    }
}

pub fn error_position(err: &roxmltree::Error) -> Position {
    let pos = err.pos();
    Position {
        line: pos.row,
        column: pos.col,
    }
}

/// True when every character may legally appear in an XML 1.0 document.
pub fn is_xml_text(s: &str) -> bool {
    s.chars().all(|c| {
        matches!(c, '\t' | '\n' | '\r')
            || ('\u{20}'..='\u{D7FF}').contains(&c)
            || ('\u{E000}'..='\u{FFFD}').contains(&c)
            || c >= '\u{10000}'
    })
}

/// Escapes character data. Carriage returns become character references so
/// that they survive end-of-line normalization on reparse.
pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(c),
        }
    }
    out
}

/// Escapes an attribute value (double-quoted). Whitespace characters other
/// than space are written as references because attribute-value
/// normalization would otherwise turn them into spaces.
pub fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            _ => out.push(c),
        }
    }
    out
}

/// Concatenated text of the direct text children of `node`.
pub fn text_of(node: roxmltree::Node<'_, '_>) -> String {
    node.children()
        .filter(|c| c.is_text())
        .filter_map(|c| c.text())
        .collect()
}

/// First child element with the given local name, ignoring namespaces.
pub fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, local: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == local)
}

pub fn children<'a, 'i: 'a>(
    node: roxmltree::Node<'a, 'i>,
    local: &'a str,
) -> impl Iterator<Item = roxmltree::Node<'a, 'i>> + 'a {
    node.children()
        .filter(move |c| c.is_element() && c.tag_name().name() == local)
}

pub fn child_text(node: roxmltree::Node<'_, '_>, local: &str) -> Option<String> {
    child(node, local).map(text_of)
}

/// Parses with DTDs allowed; the protocol never needs entity expansion but
/// some archives ship a DOCTYPE line.
pub fn parse_document(text: &str) -> Result<roxmltree::Document<'_>, roxmltree::Error> {
    roxmltree::Document::parse_with_options(
        text,
        roxmltree::ParsingOptions {
            allow_dtd: true,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_survive_reparse() {
        let raw = "a & b <c> \"q\" 'x'\r\n\tend";
        let doc = format!("<r a=\"{}\">{}</r>", escape_attr(raw), escape_text(raw));
        let parsed = roxmltree::Document::parse(&doc).unwrap();
        let root = parsed.root_element();
        assert_eq!(root.attribute("a"), Some(raw));
        assert_eq!(text_of(root), raw);
    }

    #[test]
    fn rejects_control_characters() {
        assert!(is_xml_text("plain\ttext"));
        assert!(!is_xml_text("bell\u{7}"));
    }
}
