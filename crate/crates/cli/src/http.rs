//! Blocking HTTP client behind the core crate's transport traits.

use std::time::Duration;

use olac_core::aggregator::HarvestClient;
use olac_core::provider::vida::{FetchError, Fetcher};
use olac_core::provider::ProtocolRequest;
use olac_core::viser::AggregatorClient;

const BODY_LIMIT: u64 = 256 * 1024 * 1024;

#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent(concat!("olac/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        HttpClient { agent }
    }

    pub fn get(&self, url: &str) -> Result<String, FetchError> {
        let mut resp = self.agent.get(url).call().map_err(|e| FetchError(format!("{url}: {e}")))?;
        resp.body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_to_string()
            .map_err(|e| FetchError(format!("{url}: {e}")))
    }

    pub fn protocol(&self, base_url: &str, req: &ProtocolRequest) -> Result<String, FetchError> {
        let sep = if base_url.contains('?') { '&' } else { '?' };
        self.get(&format!("{base_url}{sep}{}", req.to_query_string()))
    }
}

impl Fetcher for HttpClient {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        self.get(url)
    }
}

impl HarvestClient for HttpClient {
    fn request(&self, base_url: &str, req: &ProtocolRequest) -> Result<String, FetchError> {
        self.protocol(base_url, req)
    }
}

/// An [`AggregatorClient`] bound to one aggregator endpoint.
#[derive(Clone)]
pub struct RemoteAggregator {
    pub client: HttpClient,
    pub base_url: String,
}

impl AggregatorClient for RemoteAggregator {
    fn request(&self, req: &ProtocolRequest) -> Result<String, FetchError> {
        self.client.protocol(&self.base_url, req)
    }
}

/// Fetches custom templates; only `http` and `https` locations are allowed
/// so that request parameters cannot read local files.
pub struct TemplateFetcher(pub HttpClient);

impl Fetcher for TemplateFetcher {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(FetchError(format!("{url}: only http and https templates are fetched")));
        }
        self.0.get(url)
    }
}
