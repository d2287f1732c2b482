//! `olac serve`: the Vida, provider, aggregator and viser HTTP services.
//!
//! Protocol endpoints accept GET query strings and url-encoded POST bodies.
//! Handlers call the blocking core functions on the blocking thread pool.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime};

use axum::extract::{Path, RawQuery, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use clap::{Args, ValueEnum};
use olac_core::aggregator::Aggregator;
use olac_core::oryx::{parse_repository, RepositoryDocument};
use olac_core::provider::vida::{vida_handle, Fetcher, VidaCache};
use olac_core::provider::{handle_request, ProtocolRequest, ProviderConfig};
use olac_core::viser::{
    error_page, render_listing, render_record_page, AggregatorClient, RenderedPage, ViserConfig, ViserRequest,
};
use olac_core::Datestamp;

use crate::config::{Service, ToolConfig};
use crate::http::{HttpClient, RemoteAggregator, TemplateFetcher};
use crate::repo::io_error;
use crate::{CliError, Context};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ServiceName {
    Vida,
    Provider,
    Aggregator,
    Viser,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub service: ServiceName,
    /// Listen address, overriding the configuration.
    #[arg(long)]
    pub listen: Option<String>,
    /// Repository document served by `provider` (default: <data_dir>/repository.xml).
    #[arg(long)]
    pub repository: Option<PathBuf>,
}

pub fn run(args: ServeArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let service = match args.service {
        ServiceName::Vida => Service::Vida,
        ServiceName::Provider => Service::Provider,
        ServiceName::Aggregator => Service::Aggregator,
        ServiceName::Viser => Service::Viser,
    };
    let config = &mut ctx.config;
    if let Some(addr) = args.listen {
        match service {
            Service::Vida => config.listen.vida = addr,
            Service::Provider => config.listen.provider = addr,
            Service::Aggregator => config.listen.aggregator = addr,
            Service::Viser => config.listen.viser = addr,
        }
    }
    let config = config.clone();
    let router = match service {
        Service::Vida => vida_router(&config, Arc::new(HttpClient::default()))?,
        Service::Provider => {
            provider_router(&config, args.repository.unwrap_or_else(|| config.repository_file()))?
        }
        Service::Aggregator => aggregator_router(&config)?,
        Service::Viser => {
            let client = HttpClient::default();
            let agg = RemoteAggregator {
                client: client.clone(),
                base_url: config.viser_aggregator_url(),
            };
            viser_router(&config, Arc::new(agg), Arc::new(TemplateFetcher(client)))?
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .try_init();

    let addr = config.listen_address(service).to_string();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_error)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Environment(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(io_error)?;
        writeln!(ctx.out, "serving {} on http://{local} (public URL {})", service_name(service), config.public_url(service))
            .map_err(io_error)?;
        ctx.out.flush().map_err(io_error)?;
        axum::serve(listener, router)
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(io_error)
    })?;
    writeln!(ctx.out, "stopped").map_err(io_error)
}

fn service_name(service: Service) -> &'static str {
    match service {
        Service::Vida => "vida",
        Service::Provider => "provider",
        Service::Aggregator => "aggregator",
        Service::Viser => "viser",
    }
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut signal) => {
                signal.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {},
        _ = terminate => {},
    }
}

/// One log line per request: method, path, protocol verb, status, duration.
async fn log_requests(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let verb = req
        .uri()
        .query()
        .and_then(|q| ProtocolRequest::from_query_string(q).verb().map(str::to_string))
        .unwrap_or_default();
    let response = next.run(req).await;
    tracing::info!(
        method = %method,
        path = %path,
        verb = %verb,
        status = response.status().as_u16(),
        duration_ms = start.elapsed().as_secs_f64() * 1000.0,
        "request"
    );
    response
}

fn protocol_request(query: Option<String>, body: &str) -> ProtocolRequest {
    let mut qs = query.unwrap_or_default();
    if !body.is_empty() {
        if !qs.is_empty() {
            qs.push('&');
        }
        qs.push_str(body);
    }
    ProtocolRequest::from_query_string(&qs)
}

fn xml(text: String) -> Response {
    ([(header::CONTENT_TYPE, "text/xml; charset=utf-8")], text).into_response()
}

fn html(page: RenderedPage) -> Response {
    let status = StatusCode::from_u16(page.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let cache = if page.cacheable { "public, max-age=3600" } else { "no-cache" };
    (
        status,
        [(header::CONTENT_TYPE, "text/html; charset=utf-8"), (header::CACHE_CONTROL, cache)],
        page.html,
    )
        .into_response()
}

fn internal(message: String) -> Response {
    (StatusCode::INTERNAL_SERVER_ERROR, message).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| internal(format!("handler failed: {e}")))
}

struct VidaState {
    fetcher: Arc<dyn Fetcher>,
    cache: VidaCache,
    config: ProviderConfig,
}

/// Vida at `/vida/<suffix>`, where the suffix is the repository document URL
/// without its scheme (`https/` marks https).
pub fn vida_router(config: &ToolConfig, fetcher: Arc<dyn Fetcher>) -> Result<Router, CliError> {
    let state = Arc::new(VidaState {
        fetcher,
        cache: VidaCache::new(config.vida_ttl_seconds),
        config: config.provider_config(Service::Vida)?,
    });
    Ok(Router::new()
        .route("/vida/{*suffix}", get(vida).post(vida))
        .with_state(state)
        .layer(middleware::from_fn(log_requests)))
}

async fn vida(
    State(state): State<Arc<VidaState>>,
    Path(suffix): Path<String>,
    RawQuery(query): RawQuery,
    body: String,
) -> Response {
    let req = protocol_request(query, &body);
    match blocking(move || {
        vida_handle(&suffix, &req, state.fetcher.as_ref(), &state.cache, &state.config, Datestamp::now()).xml
    })
    .await
    {
        Ok(text) => xml(text),
        Err(response) => response,
    }
}

type Loaded<T> = Mutex<Option<(Option<SystemTime>, Arc<T>)>>;

struct ProviderState {
    path: PathBuf,
    loaded: Loaded<RepositoryDocument>,
    config: ProviderConfig,
}

impl ProviderState {
    /// The repository document, re-read when the file changes.
    fn current(&self) -> Result<Arc<RepositoryDocument>, String> {
        let modified = std::fs::metadata(&self.path).and_then(|m| m.modified()).ok();
        let mut loaded = self.loaded.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((stamp, doc)) = loaded.as_ref() {
            if *stamp == modified {
                return Ok(doc.clone());
            }
        }
        let text = std::fs::read_to_string(&self.path).map_err(|e| format!("{}: {e}", self.path.display()))?;
        let doc = Arc::new(parse_repository(&text).map_err(|e| format!("{}: {e}", self.path.display()))?);
        *loaded = Some((modified, doc.clone()));
        Ok(doc)
    }
}

/// A data provider for one repository document at `/oai`.
pub fn provider_router(config: &ToolConfig, repository: PathBuf) -> Result<Router, CliError> {
    let state = Arc::new(ProviderState {
        path: repository,
        loaded: Mutex::new(None),
        config: config.provider_config(Service::Provider)?,
    });
    state.current().map_err(CliError::Environment)?;
    Ok(Router::new()
        .route("/oai", get(provider).post(provider))
        .with_state(state)
        .layer(middleware::from_fn(log_requests)))
}

async fn provider(State(state): State<Arc<ProviderState>>, RawQuery(query): RawQuery, body: String) -> Response {
    let req = protocol_request(query, &body);
    let result = blocking(move || {
        let doc = state.current()?;
        Ok::<_, String>(handle_request(&req, doc.as_ref(), &state.config, Datestamp::now()).xml)
    })
    .await;
    match result {
        Ok(Ok(text)) => xml(text),
        Ok(Err(message)) => internal(message),
        Err(response) => response,
    }
}

pub struct AggregatorState {
    dir: PathBuf,
    identity: olac_core::aggregator::AggregatorIdentity,
    loaded: RwLock<(Option<SystemTime>, Arc<Aggregator>)>,
    config: ProviderConfig,
}

impl AggregatorState {
    fn registry_stamp(&self) -> Option<SystemTime> {
        let file = self.dir.join("registry.json");
        std::fs::metadata(file).and_then(|m| m.modified()).ok()
    }

    /// The store, reopened when a harvest or registration run by another
    /// process has rewritten the registry.
    fn current(&self) -> Result<Arc<Aggregator>, String> {
        let stamp = self.registry_stamp();
        {
            let loaded = self.loaded.read().unwrap_or_else(|e| e.into_inner());
            if loaded.0 == stamp {
                return Ok(loaded.1.clone());
            }
        }
        let agg = Arc::new(Aggregator::open(&self.dir, self.identity.clone()).map_err(|e| e.to_string())?);
        *self.loaded.write().unwrap_or_else(|e| e.into_inner()) = (stamp, agg.clone());
        Ok(agg)
    }
}

/// The aggregator endpoint at `/oai`: the union of harvested archives plus
/// the `Query` verb.
pub fn aggregator_router(config: &ToolConfig) -> Result<Router, CliError> {
    let dir = config.aggregator_dir();
    let identity = config.aggregator_identity();
    let agg = Aggregator::open(&dir, identity.clone()).map_err(crate::aggregate::aggregator_error)?;
    let state = Arc::new(AggregatorState {
        loaded: RwLock::new((None, Arc::new(agg))),
        dir,
        identity,
        config: config.provider_config(Service::Aggregator)?,
    });
    let stamp = state.registry_stamp();
    state.loaded.write().unwrap_or_else(|e| e.into_inner()).0 = stamp;
    Ok(Router::new()
        .route("/oai", get(aggregator).post(aggregator))
        .with_state(state)
        .layer(middleware::from_fn(log_requests)))
}

async fn aggregator(State(state): State<Arc<AggregatorState>>, RawQuery(query): RawQuery, body: String) -> Response {
    let req = protocol_request(query, &body);
    let result = blocking(move || {
        let agg = state.current()?;
        let snapshot = agg.snapshot();
        Ok::<_, String>(handle_request(&req, snapshot.as_ref(), &state.config, Datestamp::now()).xml)
    })
    .await;
    match result {
        Ok(Ok(text)) => xml(text),
        Ok(Err(message)) => internal(message),
        Err(response) => response,
    }
}

struct ViserState {
    agg: Arc<dyn AggregatorClient>,
    templates: Arc<dyn Fetcher>,
    config: ViserConfig,
}

/// Listings at `/` and record pages at `/record/<identifier>`.
pub fn viser_router(
    config: &ToolConfig,
    agg: Arc<dyn AggregatorClient>,
    templates: Arc<dyn Fetcher>,
) -> Result<Router, CliError> {
    let mut viser = ViserConfig::new(config.public_url(Service::Viser));
    viser.profile = Arc::new(config.profile()?);
    let state = Arc::new(ViserState {
        agg,
        templates,
        config: viser,
    });
    Ok(Router::new()
        .route("/", get(listing))
        .route("/record/{*identifier}", get(record))
        .with_state(state)
        .layer(middleware::from_fn(log_requests)))
}

async fn listing(State(state): State<Arc<ViserState>>, RawQuery(query): RawQuery) -> Response {
    let page = blocking(move || match ViserRequest::from_query_string(&query.unwrap_or_default()) {
        Ok(req) => render_listing(&req, state.agg.as_ref(), state.templates.as_ref(), &state.config),
        Err(message) => error_page(400, "Invalid request", &message),
    })
    .await;
    match page {
        Ok(page) => html(page),
        Err(response) => response,
    }
}

async fn record(State(state): State<Arc<ViserState>>, Path(identifier): Path<String>) -> Response {
    match blocking(move || render_record_page(&identifier, state.agg.as_ref(), &state.config)).await {
        Ok(page) => html(page),
        Err(response) => response,
    }
}

/// A server on its own thread and runtime, stopped when dropped.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn start(listener: std::net::TcpListener, router: Router) -> std::io::Result<Self> {
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener converts");
                let _ = axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(RunningServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
