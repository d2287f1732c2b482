//! Deterministic fixtures and in-process plumbing for tests.
//!
//! Generators take a seeded [`ChaCha8Rng`] so every corpus can be rebuilt
//! from its seed. [`InMemoryWeb`] and [`VidaNet`] stand in for HTTP when a
//! whole federation runs inside one process.

use std::collections::HashMap;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, RwLock};

use rand::seq::SliceRandom;
use rand::Rng;
pub use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

use crate::aggregator::{Aggregator, AggregatorIdentity, HarvestClient};
use crate::datestamp::Datestamp;
use crate::description::ArchiveDescription;
use crate::model::{DcTag, ElementQuad, MetadataRecord, QName, QualifiedElement, DCTERMS_REFINEMENTS};
use crate::oryx::{serialize_repository, RepositoryDocument};
use crate::provider::vida::{vida_handle, FetchError, Fetcher, VidaCache};
use crate::provider::{handle_request, ProtocolRequest, ProviderConfig};
use crate::vocab::ApplicationProfile;
use crate::xml;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const THIRD_PARTY_NS: &str = "http://example.org/ns/audio";

pub const LANGUAGE_CODES: &[&str] = &["x-sil-SWA", "x-sil-BAN", "x-sil-SKY", "x-sil-ZUL", "en", "fr", "sw"];
pub const ROLE_CODES: &[&str] = &["author", "editor", "speaker", "translator", "recorder"];
pub const TYPE_CODES: &[&str] = &["lexicon", "text", "description"];
pub const FIELD_CODES: &[&str] = &["phonology", "syntax", "semantics", "typology"];

const PIECES: &[&str] = &[
    "Swahili", "Dschang", "grammar", "wordlist", "Sapir, Edward", "a & b", "<tag>", "\"quoted\"",
    "it's", "naïve", "日本語", "emoji 🎙", "tab\there", "line\nbreak", "  padded  ", "%_\\", "1963-09-14",
];

fn text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..4);
    (0..n)
        .map(|_| *PIECES.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn nonempty_text(rng: &mut ChaCha8Rng) -> String {
    let t = text(rng);
    if t.trim().is_empty() {
        PIECES[rng.gen_range(0..5)].to_string()
    } else {
        t
    }
}

fn base_record() -> MetadataRecord {
    MetadataRecord::new()
        .declare("olac", xml::OLAC_NS)
        .declare("dcterms", xml::DCTERMS_NS)
}

/// A record exercising every syntactic feature the model keeps: vocabulary
/// refinements and codes, dcterms element refinements and encoding schemes,
/// `xml:lang`, third-party attributes and awkward text. It need not satisfy
/// the application profile.
pub fn arbitrary_record(rng: &mut ChaCha8Rng) -> MetadataRecord {
    let mut rec = base_record();
    if rng.gen_bool(0.3) {
        rec = rec.declare("audio", THIRD_PARTY_NS);
    }
    let third_party = rec.namespace_decls.contains_key("audio");
    for _ in 0..rng.gen_range(0..=12) {
        let tag = DcTag::ALL[rng.gen_range(0..DcTag::ALL.len())];
        let mut el = QualifiedElement::new(tag, text(rng));
        match rng.gen_range(0..6) {
            0 => {
                el = el
                    .typed(QName::new("olac", ["language", "role", "linguistic-type", "linguistic-field"][rng.gen_range(0..4)]))
                    .coded(*LANGUAGE_CODES.choose(rng).unwrap());
            }
            1 => {
                let candidates: Vec<&str> = DCTERMS_REFINEMENTS
                    .iter()
                    .filter(|(_, parent)| *parent == tag)
                    .map(|(local, _)| *local)
                    .collect();
                if let Some(local) = candidates.choose(rng) {
                    el.refinement_type = Some(QName::new("dcterms", *local));
                    el.element_refinement = true;
                }
            }
            2 => el = el.typed(QName::new("dcterms", ["W3CDTF", "URI", "IMT", "ISO639-2"][rng.gen_range(0..4)])),
            3 => el = el.coded(nonempty_text(rng)),
            _ => {}
        }
        if rng.gen_bool(0.2) {
            el.xml_lang = Some(["en", "fr", "sw", "x-sil-SWA"][rng.gen_range(0..4)].to_string());
        }
        if third_party && rng.gen_bool(0.3) {
            el.extra_attrs.insert("audio:rate".into(), rng.gen_range(8000..48000).to_string());
        }
        if rng.gen_bool(0.1) {
            el.extra_attrs.insert("note".into(), text(rng));
        }
        rec.elements.push(el);
    }
    rec
}

/// A record that passes profile validation without errors.
pub fn valid_record(rng: &mut ChaCha8Rng) -> MetadataRecord {
    let mut rec = base_record().push(QualifiedElement::new(DcTag::Title, nonempty_text(rng)));
    for _ in 0..rng.gen_range(0..8) {
        let el = match rng.gen_range(0..7) {
            0 => QualifiedElement::new(DcTag::Subject, "")
                .typed(QName::new("olac", "language"))
                .coded(*LANGUAGE_CODES.choose(rng).unwrap()),
            1 => QualifiedElement::new(DcTag::Language, "")
                .typed(QName::new("olac", "language"))
                .coded(*LANGUAGE_CODES.choose(rng).unwrap()),
            2 => QualifiedElement::new([DcTag::Creator, DcTag::Contributor][rng.gen_range(0..2)], nonempty_text(rng))
                .typed(QName::new("olac", "role"))
                .coded(*ROLE_CODES.choose(rng).unwrap()),
            3 => QualifiedElement::new(DcTag::Type, "")
                .typed(QName::new("olac", "linguistic-type"))
                .coded(*TYPE_CODES.choose(rng).unwrap()),
            4 => QualifiedElement::new(DcTag::Subject, "")
                .typed(QName::new("olac", "linguistic-field"))
                .coded(*FIELD_CODES.choose(rng).unwrap()),
            5 => {
                let mut el = QualifiedElement::new(DcTag::Title, nonempty_text(rng));
                el.refinement_type = Some(QName::new("dcterms", "alternative"));
                el.element_refinement = true;
                el
            }
            _ => QualifiedElement::new(DcTag::ALL[rng.gen_range(0..DcTag::ALL.len())], nonempty_text(rng)),
        };
        rec.elements.push(el);
    }
    rec
}

pub fn description(name: &str) -> ArchiveDescription {
    ArchiveDescription {
        archive_name: name.to_string(),
        archive_url: format!("http://archives.example/{}", name.to_lowercase().replace(' ', "-")),
        curator: "Fixture Curator".into(),
        location: "Fixture City".into(),
        institution_name: "Fixture Institute".into(),
        institution_url: "http://institute.example/".into(),
        synopsis: format!("Generated holdings of {name}"),
        access_terms: "Open access".into(),
    }
}

/// Whether fixture record `i` is about Swahili.
pub fn fixture_is_swahili(i: usize) -> bool {
    i.is_multiple_of(5)
}

/// Deterministic record `i` of a fixture repository. Every fifth record has
/// a Swahili subject language.
pub fn fixture_record(repository_id: &str, i: usize) -> MetadataRecord {
    let mut rec = base_record()
        .push(QualifiedElement::new(DcTag::Title, format!("{repository_id} item {i}")))
        .push(
            QualifiedElement::new(DcTag::Creator, format!("Speaker {}", i % 7))
                .typed(QName::new("olac", "role"))
                .coded(ROLE_CODES[i % ROLE_CODES.len()]),
        )
        .push(QualifiedElement::new(DcTag::Date, format!("19{:02}-01-01", 50 + i % 50)).typed(QName::new("dcterms", "W3CDTF")));
    let language = if fixture_is_swahili(i) { "x-sil-SWA" } else { LANGUAGE_CODES[1 + i % (LANGUAGE_CODES.len() - 1)] };
    rec.elements.push(
        QualifiedElement::new(DcTag::Subject, "")
            .typed(QName::new("olac", "language"))
            .coded(language),
    );
    if i.is_multiple_of(3) {
        let mut alt = QualifiedElement::new(DcTag::Title, format!("Alternative title {i}"));
        alt.refinement_type = Some(QName::new("dcterms", "alternative"));
        alt.element_refinement = true;
        rec.elements.push(alt);
    }
    rec
}

/// A repository of `n` fixture records with ids `r0000`, `r0001`, ...,
/// datestamped one minute apart from `start`.
pub fn fixture_repository(repository_id: &str, n: usize, start: Datestamp) -> RepositoryDocument {
    let profile = ApplicationProfile::shipped();
    let mut doc = RepositoryDocument::new(repository_id, description(&format!("Archive {repository_id}")))
        .expect("fixture repository id is valid");
    for i in 0..n {
        doc = doc
            .upsert_record(&fixture_local_id(i), fixture_record(repository_id, i), start.plus_seconds(60 * i as i64), &profile)
            .expect("fixture records are valid")
            .0;
    }
    doc
}

pub fn fixture_local_id(i: usize) -> String {
    format!("r{i:04}")
}

/// A repository of `n` random valid records, some deleted, with sets.
pub fn random_repository(rng: &mut ChaCha8Rng, n: usize) -> RepositoryDocument {
    let profile = ApplicationProfile::shipped();
    let mut doc = RepositoryDocument::new("random.example", description("Random Archive")).unwrap();
    doc = doc.declare_set("audio", "Audio").unwrap().declare_set("text", "Texts & notes").unwrap();
    for i in 0..n {
        let now = Datestamp::from_unix(rng.gen_range(0..2_000_000_000));
        let id = format!("rec-{i}");
        doc = doc.upsert_record(&id, valid_record(rng), now, &profile).unwrap().0;
        if rng.gen_bool(0.3) {
            let specs: Vec<String> = ["audio", "text"]
                .iter()
                .filter(|_| rng.gen_bool(0.5))
                .map(|s| s.to_string())
                .collect();
            doc = doc.assign_sets(&id, &specs, now).unwrap();
        }
        if rng.gen_bool(0.1) {
            doc = doc.delete_record(&id, now.plus_seconds(1)).unwrap();
        }
    }
    doc
}

const QUAD_TAGS: &[&str] = &["title", "subject", "language", "creator", "type"];
const QUAD_CONTENT: &[&str] = &["", "Swahili", "swahili grammar", "Sapir, Edward", "it's", "50%"];
const QUAD_TYPES: &[&str] = &["", "olac:language", "olac:role", "dcterms:W3CDTF"];
const QUAD_CODES: &[&str] = &["", "x-sil-SWA", "x-sil-BAN", "editor", "sw"];

/// Up to twelve quads drawn from small pools so random queries often match.
pub fn random_quads(rng: &mut ChaCha8Rng) -> Vec<ElementQuad> {
    (0..rng.gen_range(0..=12))
        .map(|_| {
            ElementQuad::new(
                *QUAD_TAGS.choose(rng).unwrap(),
                *QUAD_CONTENT.choose(rng).unwrap(),
                *QUAD_TYPES.choose(rng).unwrap(),
                *QUAD_CODES.choose(rng).unwrap(),
            )
        })
        .collect()
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn random_comparison(rng: &mut ChaCha8Rng, n: usize) -> String {
    let alias = rng.gen_range(1..=n);
    let (field, pool) = match rng.gen_range(0..4) {
        0 => ("tag", QUAD_TAGS),
        1 => ("content", QUAD_CONTENT),
        2 => ("type", QUAD_TYPES),
        _ => ("code", QUAD_CODES),
    };
    let field = if rng.gen_bool(0.1) { field.to_uppercase() } else { field.to_string() };
    let value = *pool.choose(rng).unwrap();
    let (op, literal) = match rng.gen_range(0..6) {
        0 | 1 => ("=", value.to_string()),
        2 => ("!=", value.to_string()),
        3 => ("<>", value.to_string()),
        4 => (["LIKE", "like"][rng.gen_range(0..2)], like_pattern(rng, value)),
        _ => ("NOT LIKE", like_pattern(rng, value)),
    };
    format!("e{alias}.{field} {op} {}", quote(&literal))
}

fn like_pattern(rng: &mut ChaCha8Rng, value: &str) -> String {
    let chars: Vec<char> = value.chars().collect();
    match rng.gen_range(0..5) {
        0 => "%".to_string(),
        1 if !chars.is_empty() => format!("{}%", chars[..chars.len().div_ceil(2)].iter().collect::<String>()),
        2 if !chars.is_empty() => format!("%{}", chars[chars.len() / 2..].iter().collect::<String>().to_uppercase()),
        3 if !chars.is_empty() => {
            let mut c = chars.clone();
            let k = rng.gen_range(0..c.len());
            c[k] = '_';
            c.into_iter().collect()
        }
        _ => value.replace('%', "\\%").replace('_', "\\_"),
    }
}

/// A random query text over aliases `e1..en`, covering every operator,
/// NOT, AND, OR and parentheses.
pub fn random_query(rng: &mut ChaCha8Rng, n: usize, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        return random_comparison(rng, n);
    }
    match rng.gen_range(0..4) {
        0 => format!("NOT {}", random_query(rng, n, depth - 1)),
        1 => format!("({} AND {})", random_query(rng, n, depth - 1), random_query(rng, n, depth - 1)),
        2 => format!("({}) or {}", random_query(rng, n, depth - 1), random_query(rng, n, depth - 1)),
        _ => format!("{} AND NOT ({})", random_query(rng, n, depth - 1), random_query(rng, n, depth - 1)),
    }
}

/// Documents served by URL, for [`Fetcher`] users.
#[derive(Debug, Default)]
pub struct InMemoryWeb {
    docs: RwLock<HashMap<String, String>>,
}

impl InMemoryWeb {
    pub fn put(&self, url: &str, body: String) {
        self.docs.write().unwrap().insert(url.to_string(), body);
    }

    pub fn publish(&self, url: &str, repo: &RepositoryDocument) {
        self.put(url, serialize_repository(repo).expect("repository serializes"));
    }

    pub fn remove(&self, url: &str) {
        self.docs.write().unwrap().remove(url);
    }
}

impl Fetcher for InMemoryWeb {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        self.docs
            .read()
            .unwrap()
            .get(url)
            .cloned()
            .ok_or_else(|| FetchError(format!("404 for {url}")))
    }
}

/// A settable clock shared by the pieces of an in-process federation.
#[derive(Debug)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: Datestamp) -> Self {
        ManualClock(AtomicI64::new(start.unix()))
    }

    pub fn now(&self) -> Datestamp {
        Datestamp::from_unix(self.0.load(Ordering::SeqCst))
    }

    pub fn advance(&self, seconds: i64) -> Datestamp {
        Datestamp::from_unix(self.0.fetch_add(seconds, Ordering::SeqCst) + seconds)
    }
}

/// Routes harvest requests: URLs below `vida_mount` go to Vida over
/// `web`; the aggregator's own base URL (when attached) goes to it.
pub struct VidaNet {
    pub web: Arc<InMemoryWeb>,
    pub clock: Arc<ManualClock>,
    pub cache: VidaCache,
    pub vida: ProviderConfig,
    pub aggregator: Option<(Arc<Aggregator>, ProviderConfig)>,
}

impl VidaNet {
    pub const MOUNT: &'static str = "http://vida.test/vida";

    pub fn new(web: Arc<InMemoryWeb>, clock: Arc<ManualClock>) -> Self {
        VidaNet {
            web,
            clock,
            cache: VidaCache::new(0),
            vida: ProviderConfig::new(Self::MOUNT),
            aggregator: None,
        }
    }

    /// The Vida base URL for a document at `http://<suffix>`.
    pub fn vida_base_url(suffix: &str) -> String {
        format!("{}/{suffix}", Self::MOUNT)
    }
}

impl HarvestClient for VidaNet {
    fn request(&self, base_url: &str, req: &ProtocolRequest) -> Result<String, FetchError> {
        let now = self.clock.now();
        if let Some(suffix) = base_url.strip_prefix(&format!("{}/", Self::MOUNT)) {
            return Ok(vida_handle(suffix, req, self.web.as_ref(), &self.cache, &self.vida, now).xml);
        }
        match &self.aggregator {
            Some((agg, config)) if config.base_url == base_url => {
                Ok(handle_request(req, agg.snapshot().as_ref(), config, now).xml)
            }
            _ => Err(FetchError(format!("no route to {base_url}"))),
        }
    }
}

pub fn aggregator_identity() -> AggregatorIdentity {
    AggregatorIdentity {
        repository_id: "aggregator.test".into(),
        description: description("Test Aggregator"),
    }
}
