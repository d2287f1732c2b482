//! The archive description carried by repositories and returned by Identify.

use thiserror::Error;

use crate::xml;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArchiveDescription {
    pub archive_name: String,
    pub archive_url: String,
    pub curator: String,
    pub location: String,
    pub institution_name: String,
    pub institution_url: String,
    pub synopsis: String,
    pub access_terms: String,
}

/// Element names, in serialization order.
pub const FIELD_NAMES: [&str; 8] = [
    "archiveName",
    "archiveURL",
    "curator",
    "location",
    "institution",
    "institutionURL",
    "synopsis",
    "access",
];

const REQUIRED_NON_EMPTY: [&str; 3] = ["archiveName", "archiveURL", "curator"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("archive description is missing or has invalid fields: {}", .fields.join(", "))]
pub struct DescriptionError {
    pub fields: Vec<String>,
}

impl ArchiveDescription {
    fn values(&self) -> [&str; 8] {
        [
            &self.archive_name,
            &self.archive_url,
            &self.curator,
            &self.location,
            &self.institution_name,
            &self.institution_url,
            &self.synopsis,
            &self.access_terms,
        ]
    }

    fn slot(&mut self, field: &str) -> &mut String {
        match field {
            "archiveName" => &mut self.archive_name,
            "archiveURL" => &mut self.archive_url,
            "curator" => &mut self.curator,
            "location" => &mut self.location,
            "institution" => &mut self.institution_name,
            "institutionURL" => &mut self.institution_url,
            "synopsis" => &mut self.synopsis,
            _ => &mut self.access_terms,
        }
    }

    pub fn fields(&self) -> impl Iterator<Item = (&'static str, &str)> + '_ {
        FIELD_NAMES.into_iter().zip(self.values())
    }

    /// Names of fields that break the description invariants.
    pub fn problems(&self) -> Vec<String> {
        let mut fields: Vec<String> = self
            .fields()
            .filter(|(name, value)| REQUIRED_NON_EMPTY.contains(name) && value.trim().is_empty())
            .map(|(name, _)| name.to_string())
            .collect();
        if !self.archive_url.trim().is_empty() && url::Url::parse(&self.archive_url).is_err() {
            fields.push("archiveURL".to_string());
        }
        fields
    }

    pub fn check(&self) -> Result<(), DescriptionError> {
        let fields = self.problems();
        if fields.is_empty() {
            Ok(())
        } else {
            Err(DescriptionError { fields })
        }
    }

    /// Reads the eight field elements below `node`. All must be present;
    /// name, URL and curator must be non-empty.
    pub(crate) fn from_element(node: roxmltree::Node<'_, '_>) -> Result<Self, DescriptionError> {
        let mut desc = ArchiveDescription::default();
        let mut missing = Vec::new();
        for name in FIELD_NAMES {
            match xml::child(node, name) {
                Some(child) => *desc.slot(name) = xml::text_of(child),
                None => missing.push(name.to_string()),
            }
        }
        for problem in desc.problems() {
            if !missing.contains(&problem) {
                missing.push(problem);
            }
        }
        if missing.is_empty() {
            Ok(desc)
        } else {
            Err(DescriptionError { fields: missing })
        }
    }

    /// Writes one line per field element, each prefixed by `indent`.
    pub(crate) fn write_fields(&self, out: &mut String, indent: &str) {
        for (name, value) in self.fields() {
            if value.is_empty() {
                out.push_str(&format!("{indent}<{name}/>\n"));
            } else {
                out.push_str(&format!("{indent}<{name}>{}</{name}>\n", xml::escape_text(value)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ArchiveDescription {
        ArchiveDescription {
            archive_name: "Demo & Co".into(),
            archive_url: "http://example.org/".into(),
            curator: "A. Curator".into(),
            location: "Nowhere".into(),
            institution_name: "Inst".into(),
            institution_url: "http://example.org/inst".into(),
            synopsis: "Recordings".into(),
            access_terms: String::new(),
        }
    }

    #[test]
    fn fields_round_trip() {
        let mut out = String::from("<d>");
        sample().write_fields(&mut out, "");
        out.push_str("</d>");
        let doc = roxmltree::Document::parse(&out).unwrap();
        assert_eq!(ArchiveDescription::from_element(doc.root_element()), Ok(sample()));
    }

    #[test]
    fn lists_missing_and_invalid_fields() {
        let doc = roxmltree::Document::parse(
            "<d><archiveName>x</archiveName><archiveURL>not a url</archiveURL></d>",
        )
        .unwrap();
        let err = ArchiveDescription::from_element(doc.root_element()).unwrap_err();
        assert!(err.fields.contains(&"curator".to_string()));
        assert!(err.fields.contains(&"archiveURL".to_string()));
        assert!(err.fields.contains(&"synopsis".to_string()));
    }
}
