//! `olac aggregator`: the registry, harvests and queries against the local
//! store or a remote aggregator.

use std::io::Write;

use clap::{Args, Subcommand};
use olac_core::aggregator::{Aggregator, AggregatorError, EntryStatus, HarvestMode, HarvestReport};
use olac_core::provider::response::{parse_list_response, ListResponse, ResponseError};
use olac_core::provider::vida::FetchError;
use olac_core::provider::{handle_request, ProtocolRequest};
use olac_core::query::parse_query;
use olac_core::serialize_record;

use crate::config::Service;
use crate::http::HttpClient;
use crate::repo::io_error;
use crate::{CliError, Context};

#[derive(Debug, Args)]
pub struct AggregatorArgs {
    #[command(subcommand)]
    pub command: AggregatorCommand,
}

#[derive(Debug, Subcommand)]
pub enum AggregatorCommand {
    /// Register a provider by its base URL and print its archive id.
    Register { base_url: String },
    /// Harvest the named archives, or every archive that is not suspended.
    Harvest {
        archive_ids: Vec<String>,
        /// Ignore the last harvest point and re-list everything.
        #[arg(long)]
        full: bool,
    },
    /// Issue a Query and print the matching identifiers.
    Query {
        #[arg(long)]
        elements: usize,
        #[arg(long)]
        sql: String,
        /// Print the full records, not only identifiers.
        #[arg(long)]
        full: bool,
        /// Query a remote aggregator endpoint instead of the local store.
        #[arg(long)]
        url: Option<String>,
    },
    /// Print the registry.
    List,
    /// Change an archive's status (`active` or `suspended`).
    Status { archive_id: String, status: String },
}

pub fn open(ctx: &Context<'_>) -> Result<Aggregator, CliError> {
    Aggregator::open(&ctx.config.aggregator_dir(), ctx.config.aggregator_identity()).map_err(aggregator_error)
}

pub fn run(args: AggregatorArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let client = HttpClient::default();
    match args.command {
        AggregatorCommand::Register { base_url } => {
            let entry = open(ctx)?.register(&base_url, &client).map_err(aggregator_error)?;
            writeln!(ctx.out, "{}", entry.archive_id).map_err(io_error)
        }
        AggregatorCommand::Harvest { archive_ids, full } => {
            let agg = open(ctx)?;
            let mode = if full { HarvestMode::Full } else { HarvestMode::Incremental };
            let ids: Vec<String> = if archive_ids.is_empty() {
                agg.registry()
                    .into_iter()
                    .filter(|e| e.status != EntryStatus::Suspended)
                    .map(|e| e.archive_id)
                    .collect()
            } else {
                archive_ids
            };
            let fixed = ctx.now;
            let clock = move || fixed.unwrap_or_else(olac_core::Datestamp::now);
            let mut failed = 0;
            for id in ids {
                let report = agg.harvest(&id, mode, &client, &clock).map_err(aggregator_error)?;
                failed += !report.errors.is_empty() as usize;
                print_report(ctx.out, &report)?;
            }
            if failed > 0 {
                return Err(CliError::Environment(format!("{failed} harvest(s) reported errors")));
            }
            Ok(())
        }
        AggregatorCommand::Query { elements, sql, full, url } => {
            parse_query(&sql, elements).map_err(|e| CliError::Usage(format!("query: {e}")))?;
            let first = ProtocolRequest::new("Query")
                .arg("elements", &elements.to_string())
                .arg("sql", &sql);
            let pages = match url {
                Some(url) => collect(first, |req| client.protocol(&url, req))?,
                None => {
                    let agg = open(ctx)?;
                    let config = ctx.config.provider_config(Service::Aggregator)?;
                    let snapshot = agg.snapshot();
                    let now = ctx.now();
                    collect(first, |req| Ok(handle_request(req, snapshot.as_ref(), &config, now).xml))?
                }
            };
            for record in pages.iter().flat_map(|p| &p.records) {
                if !full {
                    writeln!(ctx.out, "{}", record.identifier).map_err(io_error)?;
                    continue;
                }
                writeln!(ctx.out, "# {} {}", record.identifier, record.datestamp).map_err(io_error)?;
                if let Some(md) = &record.metadata {
                    let text = serialize_record(md).map_err(|e| CliError::Invalid(e.to_string()))?;
                    writeln!(ctx.out, "{}", text.trim_end()).map_err(io_error)?;
                }
            }
            Ok(())
        }
        AggregatorCommand::List => {
            for e in open(ctx)?.registry() {
                let last = e.last_successful_harvest.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
                writeln!(
                    ctx.out,
                    "{}\t{}\t{}\t{last}\t{}",
                    e.archive_id,
                    e.status.as_str(),
                    e.base_url,
                    e.consecutive_failures
                )
                .map_err(io_error)?;
            }
            Ok(())
        }
        AggregatorCommand::Status { archive_id, status } => {
            let status = EntryStatus::parse(&status)
                .ok_or_else(|| CliError::Usage(format!("unknown status `{status}`")))?;
            open(ctx)?.set_status(&archive_id, status).map_err(aggregator_error)?;
            writeln!(ctx.out, "{archive_id}: {}", status.as_str()).map_err(io_error)
        }
    }
}

/// Follows resumption tokens to the end. An empty result is not an error.
fn collect(
    first: ProtocolRequest,
    mut send: impl FnMut(&ProtocolRequest) -> Result<String, FetchError>,
) -> Result<Vec<ListResponse>, CliError> {
    let verb = first.verb().unwrap_or_default().to_string();
    let mut req = first;
    let mut pages = Vec::new();
    loop {
        let text = send(&req).map_err(|e| CliError::Environment(e.to_string()))?;
        let page = match parse_list_response(&text) {
            Ok(page) => page,
            Err(e) if e.protocol_code() == Some("noRecordsMatch") => return Ok(pages),
            Err(ResponseError::Protocol { code, message }) => {
                return Err(CliError::Usage(format!("{code}: {message}")))
            }
            Err(e) => return Err(CliError::Environment(e.to_string())),
        };
        let token = page.resumption_token.clone();
        pages.push(page);
        match token {
            Some(t) => req = ProtocolRequest::new(&verb).arg("resumptionToken", &t),
            None => return Ok(pages),
        }
    }
}

fn print_report(out: &mut dyn Write, r: &HarvestReport) -> Result<(), CliError> {
    writeln!(
        out,
        "{}: {} harvest added={} updated={} deleted={} unchanged={}",
        r.archive_id,
        r.mode.as_str(),
        r.added,
        r.updated,
        r.deleted,
        r.unchanged
    )
    .map_err(io_error)?;
    for (stage, message) in &r.errors {
        writeln!(out, "{}: {stage} error: {message}", r.archive_id).map_err(io_error)?;
    }
    Ok(())
}

pub fn aggregator_error(e: AggregatorError) -> CliError {
    match e {
        AggregatorError::Store { .. } | AggregatorError::Io { .. } | AggregatorError::Registration { .. } => {
            CliError::Environment(e.to_string())
        }
        AggregatorError::BadRepository { .. }
        | AggregatorError::Conflict { .. }
        | AggregatorError::UnknownArchive(_)
        | AggregatorError::Suspended(_) => CliError::Invalid(e.to_string()),
    }
}
