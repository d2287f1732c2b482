mod common;

use std::collections::BTreeSet;
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

use common::{olac, INIT};
use olac_core::oryx::serialize_repository;
use olac_core::provider::response::{parse_identify, parse_list_response};
use olac_core::testkit::{self, InMemoryWeb};
use olac_core::Datestamp;
use olac_cli::config::ToolConfig;
use olac_cli::http::{HttpClient, RemoteAggregator, TemplateFetcher};
use olac_cli::serve::{aggregator_router, provider_router, viser_router, vida_router, RunningServer};

fn listener() -> (TcpListener, String) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    (l, addr)
}

fn config(data_dir: &Path) -> ToolConfig {
    ToolConfig {
        data_dir: data_dir.to_path_buf(),
        page_size: 10,
        vida_ttl_seconds: 0,
        ..ToolConfig::default()
    }
}

fn error_code(text: &str) -> Option<String> {
    parse_list_response(text).err().and_then(|e| e.protocol_code().map(str::to_string))
}

fn list_all(client: &HttpClient, url: &str) -> Vec<String> {
    let mut ids = Vec::new();
    let mut next = format!("{url}?verb=ListIdentifiers&metadataPrefix=olac");
    loop {
        let page = parse_list_response(&client.get(&next).unwrap()).unwrap();
        ids.extend(page.records.into_iter().map(|r| r.identifier));
        match page.resumption_token {
            Some(t) => next = format!("{url}?verb=ListIdentifiers&resumptionToken={t}"),
            None => return ids,
        }
    }
}

#[test]
fn four_services_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let client = HttpClient::default();
    let env = [("OLAC_PAGE_SIZE", "10")];

    // repository documents "on the web", fetched by vida
    let web = Arc::new(InMemoryWeb::default());
    let start = Datestamp::from_unix(1_000_000_000);
    for (id, n) in [("alpha.test", 40), ("beta.test", 60), ("gamma.test", 100)] {
        web.publish(&format!("http://{id}/oryx.xml"), &testkit::fixture_repository(id, n, start));
    }

    let (vida_l, vida_addr) = listener();
    let (agg_l, agg_addr) = listener();
    let (viser_l, viser_addr) = listener();
    let (prov_l, prov_addr) = listener();
    let mut cfg = config(d);
    cfg.public_url.vida = Some(format!("http://{vida_addr}/vida"));
    cfg.public_url.aggregator = Some(format!("http://{agg_addr}/oai"));
    cfg.public_url.viser = Some(format!("http://{viser_addr}/"));
    cfg.public_url.provider = Some(format!("http://{prov_addr}/oai"));

    let vida = RunningServer::start(vida_l, vida_router(&cfg, web.clone()).unwrap()).unwrap();
    let identify = client.get(&vida.url("/vida/alpha.test/oryx.xml?verb=Identify")).unwrap();
    let ident = parse_identify(&identify).unwrap();
    assert_eq!(ident.repository_identifier.as_deref(), Some("alpha.test"));
    assert_eq!(ident.base_url, format!("http://{vida_addr}/vida/alpha.test/oryx.xml"));
    let missing = client.get(&vida.url("/vida/nowhere.test/oryx.xml?verb=Identify")).unwrap();
    assert!(missing.contains("upstreamUnavailable"), "{missing}");

    let aggregator = RunningServer::start(agg_l, aggregator_router(&cfg).unwrap()).unwrap();
    let empty = client.get(&aggregator.url("/oai?verb=ListRecords&metadataPrefix=olac")).unwrap();
    assert_eq!(error_code(&empty).as_deref(), Some("noRecordsMatch"));

    for id in ["alpha.test", "beta.test", "gamma.test"] {
        let reg = olac(d, &["aggregator", "register", &vida.url(&format!("/vida/{id}/oryx.xml"))], &env);
        assert_eq!(reg.code, 0, "{}", reg.err);
        assert_eq!(reg.out.trim(), id);
    }
    let listed = olac(d, &["aggregator", "list"], &env);
    assert_eq!(listed.out.lines().count(), 3);

    let harvest = olac(d, &["aggregator", "harvest"], &env);
    assert_eq!(harvest.code, 0, "{}{}", harvest.out, harvest.err);
    assert!(harvest.out.contains("gamma.test: incremental harvest added=100"), "{}", harvest.out);

    // the running aggregator picks up the harvest
    let ids = list_all(&client, &aggregator.url("/oai"));
    assert_eq!(ids.len(), 200);
    assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), 200);

    let swahili: BTreeSet<String> = [("alpha.test", 40), ("beta.test", 60), ("gamma.test", 100)]
        .iter()
        .flat_map(|(id, n)| {
            (0..*n)
                .filter(|i| testkit::fixture_is_swahili(*i))
                .map(move |i| format!("oai:{id}:{}", testkit::fixture_local_id(i)))
        })
        .collect();
    let local = olac(d, &["aggregator", "query", "--elements", "1", "--sql", "e1.code='x-sil-SWA'"], &env);
    assert_eq!(local.code, 0, "{}", local.err);
    assert_eq!(local.out.lines().map(str::to_string).collect::<BTreeSet<_>>(), swahili);
    let remote = olac(
        d,
        &["aggregator", "query", "--elements", "1", "--sql", "e1.code='x-sil-SWA'", "--url", &aggregator.url("/oai")],
        &env,
    );
    assert_eq!(remote.out, local.out);
    let broken = olac(d, &["aggregator", "query", "--elements", "1", "--sql", "e1.code = = 'x'"], &env);
    assert_eq!(broken.code, 1);
    assert!(broken.err.contains("position"), "{}", broken.err);
    let unknown = olac(d, &["aggregator", "harvest", "nobody.test"], &env);
    assert_eq!(unknown.code, 1);

    let agg_client = RemoteAggregator {
        client: client.clone(),
        base_url: aggregator.url("/oai"),
    };
    let viser = RunningServer::start(
        viser_l,
        viser_router(&cfg, Arc::new(agg_client), Arc::new(TemplateFetcher(client.clone()))).unwrap(),
    )
    .unwrap();
    let mut next = Some(viser.url("/?elements=1&sql=e1.code%3D'x-sil-SWA'&title=Swahili+Language+Resources"));
    let mut items = Vec::new();
    let mut pages = 0;
    while let Some(url) = next.take() {
        let html = client.get(&url).unwrap();
        pages += 1;
        assert!(html.contains("<title>Swahili Language Resources</title>"));
        for part in html.split("<li><a href=\"").skip(1) {
            let href = &part[..part.find('"').unwrap()];
            items.push(href.to_string());
        }
        if let Some(at) = html.find("<a class=\"more\" href=\"") {
            let rest = &html[at + 22..];
            next = Some(rest[..rest.find('"').unwrap()].replace("&amp;", "&"));
        }
    }
    assert_eq!(pages, 4);
    assert_eq!(items.len(), swahili.len());
    let first = client.get(&items[0]).unwrap();
    assert!(first.contains("data-oai-identifier=\"oai:"), "{first}");
    let bad = client.get(&viser.url("/record/oai%3Aalpha.test%3Anothing"));
    assert!(bad.is_err(), "unknown record pages are 404");

    // a provider over a repository written with the repo commands
    assert_eq!(olac(d, INIT, &env).code, 0);
    assert_eq!(olac(d, &["repo", "add", "r1", "title=Field notes"], &env).code, 0);
    let provider = RunningServer::start(prov_l, provider_router(&cfg, cfg.repository_file()).unwrap()).unwrap();
    let ident = parse_identify(&client.get(&provider.url("/oai?verb=Identify")).unwrap()).unwrap();
    assert_eq!(ident.repository_identifier.as_deref(), Some("example.org"));
    assert_eq!(list_all(&client, &provider.url("/oai")), ["oai:example.org:r1"]);
    assert_eq!(olac(d, &["repo", "add", "r2", "title=More notes"], &env).code, 0);
    assert_eq!(list_all(&client, &provider.url("/oai")).len(), 2, "provider re-reads the edited file");

    // edits at a source flow through an incremental harvest
    let mut beta = testkit::fixture_repository("beta.test", 60, start);
    beta = beta.delete_record("r0003", Datestamp::now()).unwrap();
    web.put("http://beta.test/oryx.xml", serialize_repository(&beta).unwrap());
    let again = olac(d, &["aggregator", "harvest", "beta.test"], &env);
    assert!(again.out.contains("beta.test: incremental harvest added=0 updated=0 deleted=1"), "{}", again.out);

    // a second server on a taken port fails with the address
    let taken = olac(d, &["serve", "vida", "--listen", &vida_addr], &env);
    assert_eq!(taken.code, 2);
    assert!(taken.err.contains(&vida_addr), "{}", taken.err);

    drop((vida, aggregator, viser, provider));
}

#[test]
fn post_requests_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(olac(d, INIT, &[]).code, 0);
    let (l, addr) = listener();
    let mut cfg = config(d);
    cfg.public_url.provider = Some(format!("http://{addr}/oai"));
    let server = RunningServer::start(l, provider_router(&cfg, cfg.repository_file()).unwrap()).unwrap();
    let agent = ureq::Agent::new_with_defaults();
    let body = agent
        .post(&server.url("/oai"))
        .content_type("application/x-www-form-urlencoded")
        .send("verb=Identify")
        .unwrap()
        .body_mut()
        .read_to_string()
        .unwrap();
    assert!(body.contains("<repositoryIdentifier>example.org</repositoryIdentifier>"), "{body}");
}
