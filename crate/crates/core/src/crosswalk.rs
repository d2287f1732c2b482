//! Dumbdown from qualified OLAC metadata to simple Dublin Core.
//!
//! Each element keeps its DC tag, except DCMI refinements which move to the
//! element they refine. The text of an output element is the first of:
//! element content, the vocabulary label of its code, the raw code. Elements
//! with none of these are dropped.

use crate::model::{dcterms_refinement_parent, DcTag, MetadataRecord, QualifiedElement};
use crate::vocab::ApplicationProfile;
use crate::xml;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimpleDcRecord {
    pub elements: Vec<(DcTag, String)>,
}

impl SimpleDcRecord {
    pub fn first(&self, tag: DcTag) -> Option<&str> {
        self.elements
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, text)| text.as_str())
    }

    /// The same statements as an unqualified metadata record.
    pub fn to_metadata_record(&self) -> MetadataRecord {
        MetadataRecord {
            elements: self
                .elements
                .iter()
                .map(|(tag, text)| QualifiedElement::new(*tag, text.clone()))
                .collect(),
            namespace_decls: Default::default(),
        }
    }
}

pub fn dumbdown_record(rec: &MetadataRecord, profile: &ApplicationProfile) -> SimpleDcRecord {
    SimpleDcRecord {
        elements: rec
            .elements
            .iter()
            .filter_map(|e| dumbdown_element(rec, e, profile))
            .collect(),
    }
}

/// Target tag and display text for one element, or `None` when the element
/// has nothing to show.
pub fn dumbdown_element(
    rec: &MetadataRecord,
    element: &QualifiedElement,
    profile: &ApplicationProfile,
) -> Option<(DcTag, String)> {
    let namespace = element
        .refinement_type
        .as_ref()
        .and_then(|q| rec.namespace_of(&q.prefix).map(|uri| (uri, q.local.as_str())));

    let tag = match namespace {
        Some((xml::DCTERMS_NS, local)) => dcterms_refinement_parent(local).unwrap_or(element.tag),
        _ => element.tag,
    };

    if !element.content.trim().is_empty() {
        return Some((tag, element.content.clone()));
    }
    let code = element.code.as_deref().filter(|c| !c.trim().is_empty())?;
    let label = match namespace {
        Some((uri, local)) if uri == profile.olac_namespace_uri => profile.label(local, code),
        _ => None,
    };
    Some((tag, label.unwrap_or(code).to_string()))
}

/// Writes the `oai_dc:dc` container used by the `oai_dc` metadata format.
pub(crate) fn write_oai_dc(rec: &SimpleDcRecord, out: &mut String, indent: &str) {
    out.push_str(&format!(
        "<oai_dc:dc xmlns:oai_dc=\"{}\" xmlns:dc=\"{}\"",
        xml::OAI_DC_NS,
        xml::DC_NS
    ));
    if rec.elements.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push_str(">\n");
    for (tag, text) in &rec.elements {
        out.push_str(&format!(
            "{indent}  <dc:{tag}>{}</dc:{tag}>\n",
            xml::escape_text(text)
        ));
    }
    out.push_str(indent);
    out.push_str("</oai_dc:dc>");
}

pub fn serialize_oai_dc(rec: &SimpleDcRecord) -> String {
    let mut out = String::new();
    write_oai_dc(rec, &mut out, "");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_record;

    fn record(body: &str) -> MetadataRecord {
        parse_record(&format!(
            "<olac:olac xmlns=\"{}\" xmlns:olac=\"{}\" xmlns:xsi=\"{}\" xmlns:dcterms=\"{}\" \
             xmlns:as-formosan=\"urn:formosan\">{body}</olac:olac>",
            xml::DC_NS,
            xml::OLAC_NS,
            xml::XSI_NS,
            xml::DCTERMS_NS
        ))
        .unwrap()
    }

    fn dumb(body: &str) -> Vec<(DcTag, String)> {
        dumbdown_record(&record(body), &ApplicationProfile::shipped()).elements
    }

    #[test]
    fn code_becomes_label() {
        assert_eq!(
            dumb(r#"<subject xsi:type="olac:language" olac:code="x-sil-SWA"/>"#),
            [(DcTag::Subject, "Swahili".to_string())]
        );
    }

    #[test]
    fn content_wins_over_label() {
        assert_eq!(
            dumb(r#"<contributor xsi:type="olac:role" olac:code="editor">Sapir, Edward</contributor>"#),
            [(DcTag::Contributor, "Sapir, Edward".to_string())]
        );
    }

    #[test]
    fn refinement_moves_to_parent() {
        assert_eq!(
            dumb("<dcterms:alternative>ALTERNATIVE TITLE</dcterms:alternative>"),
            [(DcTag::Title, "ALTERNATIVE TITLE".to_string())]
        );
        assert_eq!(
            dumb(r#"<date xsi:type="dcterms:created">2001</date><format xsi:type="dcterms:extent">3 MB</format>"#),
            [(DcTag::Date, "2001".to_string()), (DcTag::Format, "3 MB".to_string())]
        );
    }

    #[test]
    fn encoding_schemes_keep_content() {
        assert_eq!(
            dumb(r#"<date xsi:type="dcterms:W3CDTF">1963-09-14</date>"#),
            [(DcTag::Date, "1963-09-14".to_string())]
        );
    }

    #[test]
    fn raw_code_then_drop() {
        assert_eq!(
            dumb(r#"<subject xsi:type="as-formosan:language" olac:code="Amis"/><subject xsi:type="olac:language" olac:code="x-sil-ZZZ"/><subject/>"#),
            [
                (DcTag::Subject, "Amis".to_string()),
                (DcTag::Subject, "x-sil-ZZZ".to_string())
            ]
        );
    }

    #[test]
    fn appendix_dumbdown() {
        let rec = parse_record(include_str!("../fixtures/appendix.xml")).unwrap();
        let dc = dumbdown_record(&rec, &ApplicationProfile::shipped());
        // the speech-format element has neither content nor code
        assert_eq!(dc.elements.len(), 11);
        assert_eq!(dc.elements[0], (DcTag::Subject, "Phonology".to_string()));
        assert_eq!(dc.elements[3], (DcTag::Subject, "Sikaiana".to_string()));
        assert_eq!(dc.first(DcTag::Title), Some("TITLE"));
    }

    #[test]
    fn oai_dc_container() {
        let rec = SimpleDcRecord {
            elements: vec![(DcTag::Title, "a < b".into())],
        };
        let text = serialize_oai_dc(&rec);
        let doc = roxmltree::Document::parse(&text).unwrap();
        let title = doc.root_element().first_element_child().unwrap();
        assert_eq!(title.tag_name().namespace(), Some(xml::DC_NS));
        assert_eq!(title.text(), Some("a < b"));
    }
}
