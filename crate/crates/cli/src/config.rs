//! Tool configuration: a TOML file plus `OLAC_*` environment overrides.
//!
//! ```toml
//! data_dir = "olac-data"
//! page_size = 500
//! vida_ttl_seconds = 300
//! token_expiry_hours = 24
//! vocab_paths = []
//!
//! [listen]
//! vida = "127.0.0.1:8081"
//! provider = "127.0.0.1:8082"
//! aggregator = "127.0.0.1:8083"
//! viser = "127.0.0.1:8084"
//!
//! [aggregator]
//! repository_id = "aggregator.localhost"
//! archive_name = "Local Aggregator"
//! # ... the other archive description fields
//!
//! [viser]
//! aggregator_url = "http://127.0.0.1:8083/oai"
//! ```
//!
//! Overrides: `OLAC_DATA_DIR`, `OLAC_PAGE_SIZE`, `OLAC_VIDA_TTL_SECONDS`,
//! `OLAC_TOKEN_EXPIRY_HOURS`, `OLAC_VOCAB_PATHS` (`:`-separated),
//! `OLAC_LISTEN_VIDA`, `OLAC_LISTEN_PROVIDER`, `OLAC_LISTEN_AGGREGATOR`,
//! `OLAC_LISTEN_VISER`, `OLAC_PUBLIC_URL_<SERVICE>` and
//! `OLAC_VISER_AGGREGATOR_URL`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use olac_core::aggregator::AggregatorIdentity;
use olac_core::provider::ProviderConfig;
use olac_core::{ApplicationProfile, ArchiveDescription};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_CONFIG_FILE: &str = "olac.toml";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub data_dir: PathBuf,
    pub page_size: usize,
    pub vida_ttl_seconds: u64,
    pub token_expiry_hours: u64,
    pub vocab_paths: Vec<PathBuf>,
    pub listen: Listen,
    /// Base URLs advertised in responses; derived from `listen` when unset.
    pub public_url: PublicUrls,
    pub aggregator: AggregatorSection,
    pub viser: ViserSection,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Listen {
    pub vida: String,
    pub provider: String,
    pub aggregator: String,
    pub viser: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PublicUrls {
    pub vida: Option<String>,
    pub provider: Option<String>,
    pub aggregator: Option<String>,
    pub viser: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorSection {
    pub repository_id: String,
    pub archive_name: String,
    pub archive_url: String,
    pub curator: String,
    pub location: String,
    pub institution_name: String,
    pub institution_url: String,
    pub synopsis: String,
    pub access_terms: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViserSection {
    /// Aggregator endpoint queried by viser; the local aggregator by default.
    pub aggregator_url: Option<String>,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            data_dir: PathBuf::from("olac-data"),
            page_size: olac_core::provider::DEFAULT_PAGE_SIZE,
            vida_ttl_seconds: 300,
            token_expiry_hours: olac_core::provider::DEFAULT_TOKEN_EXPIRY_HOURS,
            vocab_paths: Vec::new(),
            listen: Listen::default(),
            public_url: PublicUrls::default(),
            aggregator: AggregatorSection::default(),
            viser: ViserSection::default(),
        }
    }
}

impl Default for Listen {
    fn default() -> Self {
        Listen {
            vida: "127.0.0.1:8081".into(),
            provider: "127.0.0.1:8082".into(),
            aggregator: "127.0.0.1:8083".into(),
            viser: "127.0.0.1:8084".into(),
        }
    }
}

impl Default for AggregatorSection {
    fn default() -> Self {
        AggregatorSection {
            repository_id: "aggregator.localhost".into(),
            archive_name: "Local Aggregator".into(),
            archive_url: "http://localhost/".into(),
            curator: "Aggregator operator".into(),
            location: "Unspecified".into(),
            institution_name: "Unspecified".into(),
            institution_url: "http://localhost/".into(),
            synopsis: "Union catalogue of the registered language archives.".into(),
            access_terms: "Metadata is freely available.".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Service {
    Vida,
    Provider,
    Aggregator,
    Viser,
}

impl Service {
    fn path(self) -> &'static str {
        match self {
            Service::Vida => "/vida",
            Service::Provider | Service::Aggregator => "/oai",
            Service::Viser => "/",
        }
    }
}

impl ToolConfig {
    /// Reads `path`, or `olac.toml` in the working directory when it exists,
    /// then applies environment overrides.
    pub fn load(path: Option<&Path>, env: &HashMap<String, String>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(path) => Self::from_file(path)?,
            None if Path::new(DEFAULT_CONFIG_FILE).is_file() => Self::from_file(Path::new(DEFAULT_CONFIG_FILE))?,
            None => ToolConfig::default(),
        };
        config.apply_env(env)?;
        config.check()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Environment(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn apply_env(&mut self, env: &HashMap<String, String>) -> Result<(), CliError> {
        fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Usage(format!("{key}: `{value}` is not a number")))
        }
        for (key, value) in env {
            let Some(name) = key.strip_prefix("OLAC_") else { continue };
            match name {
                "DATA_DIR" => self.data_dir = PathBuf::from(value),
                "PAGE_SIZE" => self.page_size = number(key, value)?,
                "VIDA_TTL_SECONDS" => self.vida_ttl_seconds = number(key, value)?,
                "TOKEN_EXPIRY_HOURS" => self.token_expiry_hours = number(key, value)?,
                "VOCAB_PATHS" => {
                    self.vocab_paths = value.split(':').filter(|p| !p.is_empty()).map(PathBuf::from).collect()
                }
                "LISTEN_VIDA" => self.listen.vida = value.clone(),
                "LISTEN_PROVIDER" => self.listen.provider = value.clone(),
                "LISTEN_AGGREGATOR" => self.listen.aggregator = value.clone(),
                "LISTEN_VISER" => self.listen.viser = value.clone(),
                "PUBLIC_URL_VIDA" => self.public_url.vida = Some(value.clone()),
                "PUBLIC_URL_PROVIDER" => self.public_url.provider = Some(value.clone()),
                "PUBLIC_URL_AGGREGATOR" => self.public_url.aggregator = Some(value.clone()),
                "PUBLIC_URL_VISER" => self.public_url.viser = Some(value.clone()),
                "VISER_AGGREGATOR_URL" => self.viser.aggregator_url = Some(value.clone()),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.page_size == 0 {
            return Err(CliError::Usage("page_size must be at least 1".into()));
        }
        if let Some(missing) = self.vocab_paths.iter().find(|p| !p.is_file()) {
            return Err(CliError::Environment(format!("vocabulary file {} not found", missing.display())));
        }
        Ok(())
    }

    pub fn listen_address(&self, service: Service) -> &str {
        match service {
            Service::Vida => &self.listen.vida,
            Service::Provider => &self.listen.provider,
            Service::Aggregator => &self.listen.aggregator,
            Service::Viser => &self.listen.viser,
        }
    }

    /// The URL a service reports as its own base URL.
    pub fn public_url(&self, service: Service) -> String {
        let configured = match service {
            Service::Vida => &self.public_url.vida,
            Service::Provider => &self.public_url.provider,
            Service::Aggregator => &self.public_url.aggregator,
            Service::Viser => &self.public_url.viser,
        };
        configured
            .clone()
            .unwrap_or_else(|| format!("http://{}{}", self.listen_address(service), service.path()))
    }

    pub fn viser_aggregator_url(&self) -> String {
        self.viser
            .aggregator_url
            .clone()
            .unwrap_or_else(|| self.public_url(Service::Aggregator))
    }

    pub fn profile(&self) -> Result<ApplicationProfile, CliError> {
        if self.vocab_paths.is_empty() {
            return Ok(ApplicationProfile::shipped());
        }
        ApplicationProfile::load_overrides(&self.vocab_paths).map_err(|e| CliError::Environment(e.to_string()))
    }

    pub fn provider_config(&self, service: Service) -> Result<ProviderConfig, CliError> {
        let mut config = ProviderConfig::new(self.public_url(service)).with_page_size(self.page_size);
        config.token_expiry_hours = self.token_expiry_hours;
        config.profile = Arc::new(self.profile()?);
        Ok(config)
    }

    pub fn aggregator_dir(&self) -> PathBuf {
        self.data_dir.join("aggregator")
    }

    pub fn repository_file(&self) -> PathBuf {
        self.data_dir.join("repository.xml")
    }

    pub fn aggregator_identity(&self) -> AggregatorIdentity {
        let a = &self.aggregator;
        AggregatorIdentity {
            repository_id: a.repository_id.clone(),
            description: ArchiveDescription {
                archive_name: a.archive_name.clone(),
                archive_url: a.archive_url.clone(),
                curator: a.curator.clone(),
                location: a.location.clone(),
                institution_name: a.institution_name.clone(),
                institution_url: a.institution_url.clone(),
                synopsis: a.synopsis.clone(),
                access_terms: a.access_terms.clone(),
            },
        }
    }
}
