use std::sync::Arc;

use super::*;
use crate::oryx::RepositoryDocument;
use crate::provider::{handle_request, ProviderConfig};
use crate::testkit::{self, InMemoryWeb, ManualClock, VidaNet};

struct Federation {
    web: Arc<InMemoryWeb>,
    clock: Arc<ManualClock>,
    net: VidaNet,
    repos: Vec<(String, RepositoryDocument)>,
}

const SIZES: [(&str, usize); 3] = [("alpha.test", 40), ("beta.test", 60), ("gamma.test", 100)];

fn url_of(id: &str) -> String {
    format!("http://{id}/oryx.xml")
}

impl Federation {
    fn new() -> Self {
        let web = Arc::new(InMemoryWeb::default());
        let clock = Arc::new(ManualClock::new(Datestamp::from_unix(1_100_000_000)));
        let mut repos = Vec::new();
        for (id, n) in SIZES {
            let repo = testkit::fixture_repository(id, n, Datestamp::from_unix(1_000_000_000));
            web.publish(&url_of(id), &repo);
            repos.push((id.to_string(), repo));
        }
        let net = VidaNet::new(web.clone(), clock.clone());
        Federation { web, clock, net, repos }
    }

    fn base_url(id: &str) -> String {
        VidaNet::vida_base_url(&format!("{id}/oryx.xml"))
    }

    fn register_all(&self, agg: &Aggregator) {
        for (id, _) in SIZES {
            let entry = agg.register(&Self::base_url(id), &self.net).unwrap();
            assert_eq!(entry.archive_id, id);
            assert_eq!(entry.status, EntryStatus::Active);
        }
    }

    fn harvest(&self, agg: &Aggregator, id: &str, mode: HarvestMode) -> HarvestReport {
        self.clock.advance(10);
        let clock = self.clock.clone();
        agg.harvest(id, mode, &self.net, &move || clock.now()).unwrap()
    }
}

fn counts(r: &HarvestReport) -> (usize, usize, usize, usize) {
    (r.added, r.updated, r.deleted, r.unchanged)
}

fn identifiers(snapshot: &AggregateSnapshot) -> Vec<String> {
    let mut ids: Vec<String> = snapshot.records().iter().map(|r| r.identifier.clone()).collect();
    ids.sort();
    ids
}

#[test]
fn registration_is_idempotent() {
    let fed = Federation::new();
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    fed.register_all(&agg);
    fed.register_all(&agg);
    assert_eq!(agg.registry().len(), 3);
}

#[test]
fn registration_requires_curator() {
    let fed = Federation::new();
    // repository documents refuse an empty curator, so serve a hand-edited copy
    let mut text = crate::oryx::serialize_repository(&fed.repos[0].1).unwrap();
    text = text.replace("<curator>Fixture Curator</curator>", "<curator/>");
    fed.web.put("http://broken.test/oryx.xml", text);
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    let err = agg
        .register(&VidaNet::vida_base_url("broken.test/oryx.xml"), &fed.net)
        .unwrap_err();
    assert!(matches!(err, AggregatorError::Registration { .. } | AggregatorError::BadRepository { .. }));
    assert!(err.to_string().contains("curator") || err.to_string().contains("badRepository"), "{err}");
    assert!(agg.registry().is_empty());

    let unreachable = agg.register(&VidaNet::vida_base_url("nowhere.test/x.xml"), &fed.net);
    assert!(unreachable.is_err());
}

#[test]
fn identify_without_curator_is_bad_repository() {
    let text = format!(
        r#"<OAI-PMH xmlns="{}"><Identify><repositoryName>x</repositoryName>
        <description><oai-identifier xmlns="{}"><repositoryIdentifier>nocur.test</repositoryIdentifier></oai-identifier></description>
        <description><olac-archive xmlns="{}"><archiveName>A</archiveName><archiveURL>http://a/</archiveURL>
        <location/><institution/><institutionURL/><synopsis/><access/></olac-archive></description>
        </Identify></OAI-PMH>"#,
        crate::xml::OAI_NS,
        crate::xml::OAI_IDENTIFIER_NS,
        crate::xml::OLAC_ARCHIVE_NS
    );
    let client = move |_: &str, _: &ProtocolRequest| Ok(text.clone());
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    let err = agg.register("http://nocur.test/oai", &client).unwrap_err();
    assert!(matches!(err, AggregatorError::BadRepository { .. }));
    assert!(err.to_string().contains("curator"), "{err}");
}

#[test]
fn federation_full_then_incremental() {
    let fed = Federation::new();
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    fed.register_all(&agg);
    for (id, n) in SIZES {
        let report = fed.harvest(&agg, id, HarvestMode::Full);
        assert_eq!(counts(&report), (n, 0, 0, 0), "{report:?}");
        assert!(report.errors.is_empty());
    }
    let snap = agg.snapshot();
    assert_eq!(snap.records().len(), 200);
    let mut expected: Vec<String> = fed
        .repos
        .iter()
        .flat_map(|(id, repo)| repo.records.iter().map(move |r| format!("oai:{id}:{}", r.local_id)))
        .collect();
    expected.sort();
    assert_eq!(identifiers(&snap), expected);

    // edit five records and delete two at one source
    let (id, repo) = &fed.repos[1];
    let profile = crate::ApplicationProfile::shipped();
    let mut edited = repo.clone();
    let now = fed.clock.advance(60);
    for i in 0..5 {
        let mut rec = testkit::fixture_record(id, i);
        rec.elements[0].content = format!("Edited title {i}");
        edited = edited.upsert_record(&testkit::fixture_local_id(i), rec, now, &profile).unwrap().0;
    }
    for i in 10..12 {
        edited = edited.delete_record(&testkit::fixture_local_id(i), now).unwrap();
    }
    fed.web.publish(&url_of(id), &edited);

    let report = fed.harvest(&agg, id, HarvestMode::Incremental);
    assert_eq!(counts(&report), (0, 5, 2, 0), "{report:?}");
    let again = fed.harvest(&agg, id, HarvestMode::Incremental);
    assert_eq!((again.added, again.updated, again.deleted), (0, 0, 0));
    for (other, _) in SIZES {
        let r = fed.harvest(&agg, other, HarvestMode::Incremental);
        assert_eq!(r.changed(), 0, "{r:?}");
    }
    let full_again = fed.harvest(&agg, id, HarvestMode::Full);
    assert_eq!(full_again.changed(), 0);
    assert_eq!(full_again.unchanged, 60);

    let snap = agg.snapshot();
    assert_eq!(snap.records().len(), 200);
    let deleted = snap.record(&format!("oai:{id}:r0010")).unwrap();
    assert!(deleted.deleted && deleted.quads.is_empty() && deleted.record.is_none());
    let config = ProviderConfig::new("http://agg.test/oai");
    let resp = handle_request(
        &ProtocolRequest::new("GetRecord")
            .arg("identifier", &format!("oai:{id}:r0010"))
            .arg("metadataPrefix", "olac"),
        snap.as_ref(),
        &config,
        fed.clock.now(),
    );
    assert!(resp.xml.contains("status=\"deleted\""));
}

#[test]
fn store_persists_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let fed = Federation::new();
    {
        let agg = Aggregator::open(dir.path(), testkit::aggregator_identity()).unwrap();
        fed.register_all(&agg);
        for (id, _) in SIZES {
            fed.harvest(&agg, id, HarvestMode::Full);
        }
    }
    let agg = Aggregator::open(dir.path(), testkit::aggregator_identity()).unwrap();
    assert_eq!(agg.registry().len(), 3);
    assert!(agg.registry().iter().all(|e| e.last_successful_harvest.is_some()));
    let snap = agg.snapshot();
    assert_eq!(snap.records().len(), 200);
    let first = &snap.records()[0];
    assert_eq!(first.quads, extract_quads(first.record.as_deref().unwrap()));

    let before = std::fs::read(dir.path().join("archives/alpha.test.xml")).unwrap();
    let report = fed.harvest(&agg, "alpha.test", HarvestMode::Incremental);
    assert_eq!(report.changed(), 0);
    assert_eq!(std::fs::read(dir.path().join("archives/alpha.test.xml")).unwrap(), before);
}

#[test]
fn query_through_aggregate() {
    let fed = Federation::new();
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    fed.register_all(&agg);
    for (id, _) in SIZES {
        fed.harvest(&agg, id, HarvestMode::Full);
    }
    let snap = agg.snapshot();
    let q = crate::query::parse_query("e1.code='x-sil-SWA'", 1).unwrap();
    let hits = snap.eval(&q);
    assert_eq!(hits.len(), 8 + 12 + 20);
    assert!(hits.iter().all(|r| r.quads.iter().any(|q| q.code == "x-sil-SWA")));

    let config = ProviderConfig::new("http://agg.test/oai");
    let resp = handle_request(
        &ProtocolRequest::new("Query").arg("sql", "e1.code='x-sil-SWA'").arg("elements", "1"),
        snap.as_ref(),
        &config,
        fed.clock.now(),
    );
    let page = response::parse_list_response(&resp.xml).unwrap();
    assert_eq!(page.records.len(), 40);

    let resp = handle_request(
        &ProtocolRequest::new("Query").arg("sql", "e2.code='x'").arg("elements", "1"),
        snap.as_ref(),
        &config,
        fed.clock.now(),
    );
    assert_eq!(resp.error, Some(crate::provider::ErrorCode::BadArgument));

    let resp = handle_request(
        &ProtocolRequest::new("ListSets"),
        snap.as_ref(),
        &config,
        fed.clock.now(),
    );
    let sets = response::parse_list_sets(&resp.xml).unwrap();
    assert_eq!(sets.len(), 3);
    assert_eq!(sets[0].description.as_ref().unwrap().archive_name, "Archive alpha.test");
}

#[test]
fn repeated_failures_mark_failing() {
    let fed = Federation::new();
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    fed.register_all(&agg);
    fed.web.remove(&url_of("alpha.test"));
    for attempt in 1..=3 {
        let report = fed.harvest(&agg, "alpha.test", HarvestMode::Full);
        assert!(!report.errors.is_empty());
        let status = agg.snapshot().entry("alpha.test").unwrap().status;
        let expected = if attempt < 3 { EntryStatus::Active } else { EntryStatus::Failing };
        assert_eq!(status, expected);
    }
    fed.web.publish(&url_of("alpha.test"), &fed.repos[0].1);
    let report = fed.harvest(&agg, "alpha.test", HarvestMode::Full);
    assert!(report.errors.is_empty());
    assert_eq!(agg.snapshot().entry("alpha.test").unwrap().status, EntryStatus::Active);

    agg.set_status("alpha.test", EntryStatus::Suspended).unwrap();
    let clock = fed.clock.clone();
    assert!(matches!(
        agg.harvest("alpha.test", HarvestMode::Full, &fed.net, &move || clock.now()),
        Err(AggregatorError::Suspended(_))
    ));
}

#[test]
fn foreign_identifiers_are_rejected() {
    let fed = Federation::new();
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    fed.register_all(&agg);
    // serve beta's records under alpha's URL
    fed.web.publish(&url_of("alpha.test"), &fed.repos[1].1);
    let report = fed.harvest(&agg, "alpha.test", HarvestMode::Full);
    assert_eq!(report.added, 0);
    assert_eq!(report.errors.len(), 60);
    assert!(report.errors.iter().all(|(stage, _)| stage == "provenance"));
    // provenance conservation
    for r in agg.snapshot().records() {
        assert!(r.identifier.starts_with(&format!("oai:{}:", r.source_archive)));
    }
}

#[test]
fn concurrent_harvests_of_distinct_archives() {
    let fed = Federation::new();
    let agg = Aggregator::in_memory(testkit::aggregator_identity());
    fed.register_all(&agg);
    std::thread::scope(|s| {
        for (id, _) in SIZES {
            let agg = &agg;
            let fed = &fed;
            s.spawn(move || {
                let clock = fed.clock.clone();
                agg.harvest(id, HarvestMode::Full, &fed.net, &move || clock.now()).unwrap()
            });
        }
    });
    assert_eq!(agg.snapshot().records().len(), 200);
}
