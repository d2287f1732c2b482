//! Checks a record against an application profile.

use std::fmt;

use crate::model::MetadataRecord;
use crate::vocab::ApplicationProfile;
use crate::xml;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    /// Index of the offending element, when the finding concerns one.
    pub element: Option<usize>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.element {
            Some(i) => write!(f, "{}: element {}: {}", self.severity, i + 1, self.message),
            None => write!(f, "{}: {}", self.severity, self.message),
        }
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

pub fn validate_record(rec: &MetadataRecord, profile: &ApplicationProfile) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (i, element) in rec.elements.iter().enumerate() {
        let mut report = |severity, message: String| {
            findings.push(Finding {
                severity,
                element: Some(i),
                message,
            })
        };
        let Some(refinement) = &element.refinement_type else {
            if element.code.is_some() {
                report(
                    Severity::Warning,
                    format!("<{}> has a code but no refinement type", element.tag),
                );
            }
            continue;
        };
        let Some(uri) = rec.namespace_of(&refinement.prefix) else {
            report(
                Severity::Error,
                format!("prefix `{}` of {refinement} is not declared", refinement.prefix),
            );
            continue;
        };
        if uri == xml::DCTERMS_NS {
            continue;
        }
        if uri != profile.olac_namespace_uri {
            report(
                Severity::Warning,
                format!("third-party refinement {refinement} is not checked"),
            );
            continue;
        }
        let Some(parents) = profile.refinement_parent.get(&refinement.local) else {
            report(
                Severity::Error,
                format!("{refinement} is not defined by the profile"),
            );
            continue;
        };
        if !parents.contains(&element.tag) {
            report(
                Severity::Error,
                format!("{refinement} cannot refine <{}>", element.tag),
            );
        }
        match (&element.code, profile.vocabulary(&refinement.local)) {
            (Some(code), Some(vocab)) if !vocab.contains(code) => report(
                Severity::Error,
                format!("code `{code}` is not in the {} vocabulary", vocab.name),
            ),
            (None, _) if !element.content.is_empty() => report(
                Severity::Info,
                format!("{refinement} given as free text only"),
            ),
            _ => {}
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_record;

    fn wrap(body: &str) -> String {
        format!(
            "<olac:olac xmlns=\"{}\" xmlns:olac=\"{}\" xmlns:xsi=\"{}\" \
             xmlns:as-formosan=\"urn:formosan\" xmlns:dcterms=\"{}\">{body}</olac:olac>",
            xml::DC_NS,
            xml::OLAC_NS,
            xml::XSI_NS,
            xml::DCTERMS_NS
        )
    }

    fn check(body: &str) -> Vec<Finding> {
        let rec = parse_record(&wrap(body)).unwrap();
        validate_record(&rec, &ApplicationProfile::shipped())
    }

    fn count(findings: &[Finding], severity: Severity) -> usize {
        findings.iter().filter(|f| f.severity == severity).count()
    }

    #[test]
    fn subject_language_is_clean() {
        let f = check(r#"<subject xsi:type="olac:language" olac:code="x-sil-BAN">Dschang</subject>"#);
        assert_eq!(count(&f, Severity::Error), 0);
    }

    #[test]
    fn third_party_type_warns() {
        let f = check(r#"<subject xsi:type="as-formosan:language" olac:code="Amis"/>"#);
        assert_eq!(count(&f, Severity::Warning), 1);
        assert_eq!(count(&f, Severity::Error), 0);
    }

    #[test]
    fn code_outside_vocabulary() {
        let f = check(r#"<type xsi:type="olac:linguistic-type" olac:code="banana"/>"#);
        assert_eq!(count(&f, Severity::Error), 1);
    }

    #[test]
    fn unknown_olac_type_and_wrong_parent() {
        let f = check(r#"<type xsi:type="olac:flavor" olac:code="x"/>"#);
        assert_eq!(count(&f, Severity::Error), 1);
        let f = check(r#"<title xsi:type="olac:role" olac:code="editor"/>"#);
        assert_eq!(count(&f, Severity::Error), 1);
    }

    #[test]
    fn free_text_only_is_informational() {
        let f = check(r#"<subject xsi:type="olac:language">Dschang</subject>"#);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].severity, Severity::Info);
    }

    #[test]
    fn appendix_has_no_errors() {
        let rec = parse_record(include_str!("../fixtures/appendix.xml")).unwrap();
        let f = validate_record(&rec, &ApplicationProfile::shipped());
        assert_eq!(count(&f, Severity::Error), 0, "{f:?}");
        assert_eq!(count(&f, Severity::Warning), 3);
    }
}
