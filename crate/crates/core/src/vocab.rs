//! Controlled vocabularies, language identifiers and the application
//! profile that ties them to refinement types.
//!
//! Vocabulary data lives in tab-separated fixture files (`code<TAB>label`,
//! `#` comments). A file named `olac-<name>.tsv` defines the vocabulary of
//! the `olac:<name>` refinement; its `# refines:` header line lists the DC
//! elements that refinement may qualify. Language identifiers come from two
//! tables: `iso639-1.tsv` (two-letter codes) and `ethnologue.tsv`
//! (`authority-code` pairs used in `x-authority-code` identifiers).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::model::DcTag;
use crate::xml;

const SHIPPED_ISO: &str = include_str!("../vocab/iso639-1.tsv");
const SHIPPED_EXTENSIONS: &str = include_str!("../vocab/ethnologue.tsv");
const SHIPPED_VOCABULARIES: &[(&str, &str)] = &[
    ("linguistic-type", include_str!("../vocab/olac-linguistic-type.tsv")),
    ("linguistic-field", include_str!("../vocab/olac-linguistic-field.tsv")),
    ("role", include_str!("../vocab/olac-role.tsv")),
];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("{source_name}:{line}: {message}")]
    Format {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A closed code→label term set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlledVocabulary {
    /// Qualified type name, e.g. `olac:role`.
    pub name: String,
    pub terms: BTreeMap<String, String>,
}

impl ControlledVocabulary {
    pub fn contains(&self, code: &str) -> bool {
        self.terms.contains_key(code)
    }

    pub fn label(&self, code: &str) -> Option<&str> {
        self.terms.get(code).map(String::as_str)
    }
}

/// Parsed contents of one fixture file.
struct TermFile {
    terms: BTreeMap<String, String>,
    refines: Option<Vec<String>>,
}

fn parse_term_file(source_name: &str, text: &str) -> Result<TermFile, VocabError> {
    let mut terms = BTreeMap::new();
    let mut refines = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let err = |message: String| VocabError::Format {
            source_name: source_name.to_string(),
            line: idx + 1,
            message,
        };
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(tags) = comment.trim().strip_prefix("refines:") {
                refines = Some(tags.split_whitespace().map(str::to_string).collect());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (code, label) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `code<TAB>label`".into()))?;
        let (code, label) = (code.trim(), label.trim());
        if code.is_empty() {
            return Err(err("empty code".into()));
        }
        if label.is_empty() {
            return Err(err(format!("empty label for `{code}`")));
        }
        if terms.insert(code.to_string(), label.to_string()).is_some() {
            return Err(err(format!("duplicate code `{code}`")));
        }
    }
    Ok(TermFile { terms, refines })
}

/// Loads a vocabulary from `code<TAB>label` lines.
pub fn parse_vocabulary(name: &str, text: &str) -> Result<ControlledVocabulary, VocabError> {
    Ok(ControlledVocabulary {
        name: name.to_string(),
        terms: parse_term_file(name, text)?.terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LanguageIdKind {
    Iso639_1,
    Extension,
}

/// A language identifier: either a two-letter ISO 639-1 code or an
/// extension identifier `x-<authority>-<code>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LanguageIdentifier {
    pub kind: LanguageIdKind,
    pub authority: String,
    pub code: String,
}

impl fmt::Display for LanguageIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LanguageIdKind::Iso639_1 => f.write_str(&self.code),
            LanguageIdKind::Extension => write!(f, "x-{}-{}", self.authority, self.code),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {part} subtag `{value}`: subtags are 1 to 8 ASCII letters or digits")]
pub struct InvalidSubtagError {
    pub part: &'static str,
    pub value: String,
}

fn check_subtag(part: &'static str, value: &str) -> Result<(), InvalidSubtagError> {
    if (1..=8).contains(&value.len()) && value.bytes().all(|b| b.is_ascii_alphanumeric()) {
        Ok(())
    } else {
        Err(InvalidSubtagError {
            part,
            value: value.to_string(),
        })
    }
}

/// Builds an extension identifier. The authority is lowercased; the code
/// keeps its case.
pub fn make_language_identifier(
    authority: &str,
    code: &str,
) -> Result<LanguageIdentifier, InvalidSubtagError> {
    check_subtag("authority", authority)?;
    check_subtag("code", code)?;
    Ok(LanguageIdentifier {
        kind: LanguageIdKind::Extension,
        authority: authority.to_ascii_lowercase(),
        code: code.to_string(),
    })
}

impl FromStr for LanguageIdentifier {
    type Err = InvalidSubtagError;

    /// Splits an identifier syntactically; table membership is checked by
    /// [`validate_language_identifier`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("x-") {
            let (authority, code) = rest.split_once('-').ok_or_else(|| InvalidSubtagError {
                part: "code",
                value: String::new(),
            })?;
            return make_language_identifier(authority, code);
        }
        if s.len() == 2 && s.bytes().all(|b| b.is_ascii_lowercase()) {
            return Ok(LanguageIdentifier {
                kind: LanguageIdKind::Iso639_1,
                authority: String::new(),
                code: s.to_string(),
            });
        }
        Err(InvalidSubtagError {
            part: "language",
            value: s.to_string(),
        })
    }
}

/// The two lookup tables behind language identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageTable {
    /// Two-letter code → language name.
    pub iso: BTreeMap<String, String>,
    /// `authority-code` → language name.
    pub extensions: BTreeMap<String, String>,
}

impl LanguageTable {
    pub fn shipped() -> Self {
        LanguageTable::from_texts(SHIPPED_ISO, SHIPPED_EXTENSIONS)
            .expect("shipped language tables are well formed")
    }

    pub fn from_texts(iso: &str, extensions: &str) -> Result<Self, VocabError> {
        Ok(LanguageTable {
            iso: parse_term_file("iso639-1", iso)?.terms,
            extensions: parse_term_file("ethnologue", extensions)?.terms,
        })
    }

    /// Every identifier the table accepts, with its label.
    pub fn identifiers(&self) -> impl Iterator<Item = (String, &str)> + '_ {
        self.iso
            .iter()
            .map(|(c, l)| (c.clone(), l.as_str()))
            .chain(self.extensions.iter().map(|(k, l)| (format!("x-{k}"), l.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanguageValidity {
    Valid { label: String },
    Invalid { reason: String },
}

impl LanguageValidity {
    pub fn is_valid(&self) -> bool {
        matches!(self, LanguageValidity::Valid { .. })
    }
}

pub fn validate_language_identifier(id: &str, table: &LanguageTable) -> LanguageValidity {
    let invalid = |reason: &str| LanguageValidity::Invalid {
        reason: reason.to_string(),
    };
    let Ok(parsed) = id.parse::<LanguageIdentifier>() else {
        return invalid("not a coded identifier");
    };
    // Round-tripping rejects an uppercase authority, which the table never uses.
    if parsed.to_string() != id {
        return invalid("not in canonical form");
    }
    let found = match parsed.kind {
        LanguageIdKind::Iso639_1 => table.iso.get(&parsed.code),
        LanguageIdKind::Extension => table
            .extensions
            .get(&format!("{}-{}", parsed.authority, parsed.code)),
    };
    match (found, parsed.kind) {
        (Some(label), _) => LanguageValidity::Valid {
            label: label.clone(),
        },
        (None, LanguageIdKind::Iso639_1) => invalid("unknown two-letter code"),
        (None, LanguageIdKind::Extension) => invalid("unknown extension code"),
    }
}

/// The OLAC application profile: which refinement types exist in the OLAC
/// namespace, which DC elements each refines, and their vocabularies.
#[derive(Debug, Clone)]
pub struct ApplicationProfile {
    pub olac_namespace_uri: String,
    /// Keyed by the local name of the refinement type (`role` for
    /// `olac:role`).
    pub vocabularies: BTreeMap<String, ControlledVocabulary>,
    pub refinement_parent: BTreeMap<String, BTreeSet<DcTag>>,
    pub languages: LanguageTable,
    legacy_refinements: BTreeMap<String, String>,
}

const LANGUAGE_TYPE: &str = "language";

impl ApplicationProfile {
    /// The profile assembled from the fixture files compiled into the crate.
    pub fn shipped() -> Self {
        let mut profile = ApplicationProfile::with_languages(LanguageTable::shipped());
        for (local, text) in SHIPPED_VOCABULARIES {
            profile
                .add_vocabulary_text(local, &format!("olac-{local}.tsv"), text)
                .expect("shipped vocabularies are well formed");
        }
        profile
    }

    fn with_languages(languages: LanguageTable) -> Self {
        let mut profile = ApplicationProfile {
            olac_namespace_uri: xml::OLAC_NS.to_string(),
            vocabularies: BTreeMap::new(),
            refinement_parent: BTreeMap::new(),
            languages: LanguageTable::default(),
            legacy_refinements: BTreeMap::from([
                ("language".to_string(), LANGUAGE_TYPE.to_string()),
                ("linguistic".to_string(), "linguistic-type".to_string()),
            ]),
        };
        profile.set_languages(languages);
        profile
    }

    /// Replaces the language tables and the derived `olac:language`
    /// vocabulary.
    pub fn set_languages(&mut self, languages: LanguageTable) {
        let terms = languages
            .identifiers()
            .map(|(code, label)| (code, label.to_string()))
            .collect();
        self.vocabularies.insert(
            LANGUAGE_TYPE.to_string(),
            ControlledVocabulary {
                name: "olac:language".to_string(),
                terms,
            },
        );
        self.refinement_parent.insert(
            LANGUAGE_TYPE.to_string(),
            BTreeSet::from([DcTag::Language, DcTag::Subject]),
        );
        self.languages = languages;
    }

    fn add_vocabulary_text(
        &mut self,
        local: &str,
        source_name: &str,
        text: &str,
    ) -> Result<(), VocabError> {
        let file = parse_term_file(source_name, text)?;
        let refines = file.refines.ok_or_else(|| VocabError::Format {
            source_name: source_name.to_string(),
            line: 0,
            message: "missing `# refines:` header".into(),
        })?;
        let mut parents = BTreeSet::new();
        for tag in refines {
            let tag = DcTag::from_str(&tag).map_err(|e| VocabError::Format {
                source_name: source_name.to_string(),
                line: 0,
                message: e.to_string(),
            })?;
            parents.insert(tag);
        }
        self.vocabularies.insert(
            local.to_string(),
            ControlledVocabulary {
                name: format!("olac:{local}"),
                terms: file.terms,
            },
        );
        self.refinement_parent.insert(local.to_string(), parents);
        Ok(())
    }

    /// Overlays fixture files on top of the shipped profile. Files are
    /// recognised by name: `iso639-1.tsv`, `ethnologue.tsv`, `olac-*.tsv`.
    pub fn load_overrides<P: AsRef<Path>>(paths: &[P]) -> Result<Self, VocabError> {
        let mut profile = ApplicationProfile::shipped();
        let mut iso = None;
        let mut ext = None;
        for path in paths {
            let path = path.as_ref();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let text = fs::read_to_string(path).map_err(|source| VocabError::Io {
                path: path.display().to_string(),
                source,
            })?;
            match name.as_str() {
                "iso639-1.tsv" => iso = Some(text),
                "ethnologue.tsv" => ext = Some(text),
                _ => {
                    let local = name
                        .strip_prefix("olac-")
                        .and_then(|n| n.strip_suffix(".tsv"))
                        .ok_or_else(|| VocabError::Format {
                            source_name: name.clone(),
                            line: 0,
                            message: "vocabulary files are named olac-<type>.tsv".into(),
                        })?;
                    profile.add_vocabulary_text(local, &name, &text)?;
                }
            }
        }
        if iso.is_some() || ext.is_some() {
            let mut languages = profile.languages.clone();
            if let Some(text) = iso {
                languages.iso = parse_term_file("iso639-1.tsv", &text)?.terms;
            }
            if let Some(text) = ext {
                languages.extensions = parse_term_file("ethnologue.tsv", &text)?.terms;
            }
            profile.set_languages(languages);
        }
        Ok(profile)
    }

    pub fn vocabulary(&self, local: &str) -> Option<&ControlledVocabulary> {
        self.vocabularies.get(local)
    }

    /// Local name of the OLAC refinement a legacy dot suffix stands for.
    pub fn legacy_refinement(&self, suffix: &str) -> Option<&str> {
        self.legacy_refinements.get(suffix).map(String::as_str)
    }

    /// Label for `code` under the OLAC refinement `local`, if both are known.
    pub fn label(&self, local: &str, code: &str) -> Option<&str> {
        self.vocabulary(local).and_then(|v| v.label(code))
    }
}
