//! Vida: the protocol served from a repository document somewhere on the web.
//!
//! The document URL, minus its `http://` scheme, is appended to the Vida
//! mount point. A suffix starting with `https/` addresses an https URL.
//! Fetched documents are cached per URL for a configurable number of
//! seconds.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::{error_response, handle_request, ErrorCode, ProtocolRequest, ProtocolResponse, ProviderConfig};
use crate::datestamp::Datestamp;
use crate::oryx::{parse_repository, RepositoryDocument};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct FetchError(pub String);

/// Retrieves a document by URL. Implemented over HTTP by the service
/// binaries and by in-memory maps in tests.
pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, FetchError>;
}

impl<F: Fetcher + ?Sized> Fetcher for Arc<F> {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        (**self).fetch(url)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VidaError {
    #[error("no repository URL follows the Vida mount point")]
    EmptySuffix,
    #[error("`{0}` is not a usable repository URL")]
    BadUrl(String),
    #[error("could not fetch {url}: {message}")]
    Unavailable { url: String, message: String },
    #[error("{url} is not a valid repository document: {message}")]
    BadRepository { url: String, message: String },
}

impl VidaError {
    pub fn code(&self) -> ErrorCode {
        match self {
            VidaError::EmptySuffix | VidaError::BadUrl(_) => ErrorCode::BadArgument,
            VidaError::Unavailable { .. } => ErrorCode::UpstreamUnavailable,
            VidaError::BadRepository { .. } => ErrorCode::BadRepository,
        }
    }
}

/// Rebuilds the repository URL from the path after the mount point.
pub fn vida_url(suffix: &str) -> Result<String, VidaError> {
    let suffix = suffix.trim_start_matches('/');
    if suffix.is_empty() {
        return Err(VidaError::EmptySuffix);
    }
    let url = match suffix.strip_prefix("https/") {
        Some(rest) if !rest.is_empty() => format!("https://{rest}"),
        Some(_) => return Err(VidaError::EmptySuffix),
        None => format!("http://{suffix}"),
    };
    match url::Url::parse(&url) {
        Ok(parsed) if parsed.host_str().is_some_and(|h| !h.is_empty()) => Ok(url),
        _ => Err(VidaError::BadUrl(url)),
    }
}

type Slot = Arc<Mutex<Option<(Datestamp, Arc<RepositoryDocument>)>>>;

/// Per-URL cache of parsed repository documents. Requests for the same URL
/// are serialized on that URL's slot, so concurrent misses fetch once.
#[derive(Debug)]
pub struct VidaCache {
    ttl_seconds: i64,
    slots: Mutex<HashMap<String, Slot>>,
}

impl VidaCache {
    pub fn new(ttl_seconds: u64) -> Self {
        VidaCache {
            ttl_seconds: ttl_seconds as i64,
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn slot(&self, url: &str) -> Slot {
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        slots.entry(url.to_string()).or_default().clone()
    }

    /// Returns the cached document for `url`, fetching it when absent or
    /// older than the time to live. Failures are not cached.
    pub fn get_or_fetch(
        &self,
        url: &str,
        fetcher: &dyn Fetcher,
        now: Datestamp,
    ) -> Result<Arc<RepositoryDocument>, VidaError> {
        let slot = self.slot(url);
        let mut entry = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((fetched_at, doc)) = entry.as_ref() {
            let age = now.unix() - fetched_at.unix();
            if (0..self.ttl_seconds).contains(&age) {
                return Ok(doc.clone());
            }
        }
        let text = fetcher.fetch(url).map_err(|e| VidaError::Unavailable {
            url: url.to_string(),
            message: e.0,
        })?;
        let doc = Arc::new(parse_repository(&text).map_err(|e| VidaError::BadRepository {
            url: url.to_string(),
            message: e.to_string(),
        })?);
        *entry = Some((now, doc.clone()));
        Ok(doc)
    }
}

/// Resolves a path suffix to a snapshot of the repository it addresses.
pub fn vida_resolve(
    suffix: &str,
    fetcher: &dyn Fetcher,
    cache: &VidaCache,
    now: Datestamp,
) -> Result<Arc<RepositoryDocument>, VidaError> {
    let url = vida_url(suffix)?;
    cache.get_or_fetch(&url, fetcher, now)
}

/// Answers a protocol request addressed to `<mount>/<suffix>`.
/// `config.base_url` is the mount point; the reported base URL includes the
/// suffix.
pub fn vida_handle(
    suffix: &str,
    req: &ProtocolRequest,
    fetcher: &dyn Fetcher,
    cache: &VidaCache,
    config: &ProviderConfig,
    now: Datestamp,
) -> ProtocolResponse {
    let base_url = format!(
        "{}/{}",
        config.base_url.trim_end_matches('/'),
        suffix.trim_start_matches('/')
    );
    match vida_resolve(suffix, fetcher, cache, now) {
        Ok(doc) => {
            let config = ProviderConfig {
                base_url,
                ..config.clone()
            };
            handle_request(req, doc.as_ref(), &config, now)
        }
        Err(err) => error_response(req, &base_url, now, err.code(), &err.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn url_from_suffix() {
        assert_eq!(
            vida_url("example.org/olac/repo.xml").unwrap(),
            "http://example.org/olac/repo.xml"
        );
        assert_eq!(
            vida_url("https/example.org/repo.xml").unwrap(),
            "https://example.org/repo.xml"
        );
        assert_eq!(vida_url("localhost:8080/r.xml").unwrap(), "http://localhost:8080/r.xml");
        assert_eq!(vida_url(""), Err(VidaError::EmptySuffix));
        assert_eq!(vida_url("/"), Err(VidaError::EmptySuffix));
        assert_eq!(vida_url("").unwrap_err().code(), ErrorCode::BadArgument);
    }

    struct Counting {
        body: String,
        calls: AtomicUsize,
    }

    impl Fetcher for Counting {
        fn fetch(&self, _url: &str) -> Result<String, FetchError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.body.clone())
        }
    }

    fn repo_text() -> String {
        let desc = crate::ArchiveDescription {
            archive_name: "Demo".into(),
            archive_url: "http://example.org/".into(),
            curator: "C".into(),
            ..Default::default()
        };
        let doc = RepositoryDocument::new("example.org", desc).unwrap();
        crate::oryx::serialize_repository(&doc).unwrap()
    }

    #[test]
    fn ttl_cache_fetches_once() {
        let fetcher = Counting {
            body: repo_text(),
            calls: AtomicUsize::new(0),
        };
        let cache = VidaCache::new(60);
        let t0 = Datestamp::from_unix(1_000);
        vida_resolve("example.org/r.xml", &fetcher, &cache, t0).unwrap();
        vida_resolve("example.org/r.xml", &fetcher, &cache, t0.plus_seconds(59)).unwrap();
        assert_eq!(fetcher.calls.load(Ordering::SeqCst), 1);
        vida_resolve("example.org/r.xml", &fetcher, &cache, t0.plus_seconds(60)).unwrap();
        assert_eq!(fetcher.calls.load(Ordering::SeqCst), 2);
        vida_resolve("example.org/other.xml", &fetcher, &cache, t0.plus_seconds(60)).unwrap();
        assert_eq!(fetcher.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn fetch_and_parse_failures() {
        struct Failing;
        impl Fetcher for Failing {
            fn fetch(&self, _url: &str) -> Result<String, FetchError> {
                Err(FetchError("connection refused".into()))
            }
        }
        let cache = VidaCache::new(60);
        let now = Datestamp::from_unix(0);
        let err = vida_resolve("example.org/r.xml", &Failing, &cache, now).unwrap_err();
        assert_eq!(err.code(), ErrorCode::UpstreamUnavailable);

        let junk = Counting {
            body: "<nonsense/>".into(),
            calls: AtomicUsize::new(0),
        };
        let err = vida_resolve("example.org/r.xml", &junk, &cache, now).unwrap_err();
        assert_eq!(err.code(), ErrorCode::BadRepository);
        assert!(err.to_string().contains("http://example.org/r.xml"));
    }

    #[test]
    fn handle_reports_suffixed_base_url() {
        let fetcher = Counting {
            body: repo_text(),
            calls: AtomicUsize::new(0),
        };
        let cache = VidaCache::new(60);
        let config = ProviderConfig::new("http://vida.test/vida");
        let resp = vida_handle(
            "example.org/r.xml",
            &ProtocolRequest::new("Identify"),
            &fetcher,
            &cache,
            &config,
            Datestamp::from_unix(0),
        );
        assert_eq!(resp.error, None);
        assert!(resp.xml.contains("<baseURL>http://vida.test/vida/example.org/r.xml</baseURL>"));

        let resp = vida_handle("", &ProtocolRequest::new("Identify"), &fetcher, &cache, &config, Datestamp::from_unix(0));
        assert_eq!(resp.error, Some(ErrorCode::BadArgument));
    }
}
