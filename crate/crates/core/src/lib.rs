//! Metadata infrastructure for a federation of language archives.
//!
//! * [`model`], [`vocab`], [`validate`]: qualified Dublin Core records, the
//!   controlled vocabularies they reference and profile validation.
//! * [`crosswalk`]: dumbdown to simple Dublin Core.
//! * [`oryx`]: a whole repository as one document.
//! * [`provider`]: the harvesting protocol engine, including the virtual
//!   data provider over posted repository documents.
//! * [`aggregator`] and [`query`]: harvesting many providers, re-exposing the
//!   union and answering the `Query` verb.
//! * [`viser`]: web pages rendered from query results.

pub mod aggregator;
pub mod crosswalk;
pub mod datestamp;
pub mod description;
pub mod model;
pub mod oryx;
pub mod provider;
pub mod query;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
pub mod validate;
pub mod viser;
pub mod vocab;
pub mod xml;

pub use datestamp::Datestamp;
pub use description::ArchiveDescription;
pub use model::{
    extract_quads, parse_record, serialize_record, upgrade_legacy_record, DcTag, ElementQuad,
    MetadataRecord, QName, QualifiedElement,
};
pub use vocab::ApplicationProfile;
