//! `olac repo`: single-user editing of a static repository document.

use std::io::{BufRead, IsTerminal};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use olac_core::model::{dcterms_refinement_parent, BadQName};
use olac_core::oryx::{parse_repository, serialize_repository, OryxError, RepositoryDocument};
use olac_core::validate::{self, Severity};
use olac_core::xml;
use olac_core::{ApplicationProfile, ArchiveDescription, DcTag, MetadataRecord, QName, QualifiedElement};

use crate::{CliError, Context};

#[derive(Debug, Args)]
pub struct RepoArgs {
    /// Working repository file (default: <data_dir>/repository.xml).
    #[arg(long, global = true)]
    pub file: Option<PathBuf>,
    #[command(subcommand)]
    pub command: RepoCommand,
}

#[derive(Debug, Subcommand)]
pub enum RepoCommand {
    /// Create a repository with its archive description.
    Init(InitArgs),
    /// Add a new record.
    Add(RecordArgs),
    /// Replace the elements of an existing record.
    Set(RecordArgs),
    /// Withdraw a record, leaving a deletion marker.
    Remove { local_id: String },
    /// Check every record against the application profile.
    Validate,
    /// Write the publishable repository document.
    Publish(PublishArgs),
    /// List records with datestamps and status.
    List,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Repository identifier, e.g. a domain name such as `example.org`.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub curator: Option<String>,
    #[arg(long)]
    pub location: Option<String>,
    #[arg(long)]
    pub institution: Option<String>,
    #[arg(long)]
    pub institution_url: Option<String>,
    #[arg(long)]
    pub synopsis: Option<String>,
    #[arg(long)]
    pub access: Option<String>,
    /// Overwrite an existing repository file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    pub local_id: String,
    /// Elements as `TAG[,TYPE[,CODE]]=CONTENT`, e.g.
    /// `contributor,olac:role,editor=Sapir, Edward` or `dcterms:alternative=Other title`.
    #[arg(required = true)]
    pub elements: Vec<String>,
    /// Extra namespace declarations as `PREFIX=URI`.
    #[arg(long = "ns")]
    pub namespaces: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PublishArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Public URL the file will be reachable at; used to print the Vida suffix.
    #[arg(long)]
    pub public_url: Option<String>,
    /// Publish even when records have validation errors.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: RepoArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let file = args.file.clone().unwrap_or_else(|| ctx.config.repository_file());
    let profile = ctx.config.profile()?;
    match args.command {
        RepoCommand::Init(init) => {
            if file.exists() && !init.force {
                return Err(CliError::Usage(format!("{} exists; pass --force to replace it", file.display())));
            }
            let (id, description) = init_fields(init)?;
            let doc = RepositoryDocument::new(&id, description).map_err(oryx_error)?;
            save(&file, &doc)?;
            writeln!(ctx.out, "initialized repository {id} in {}", file.display()).map_err(io_error)
        }
        RepoCommand::Add(rec) => {
            let doc = load(&file)?;
            if doc.get(&rec.local_id).is_some_and(|r| !r.is_deleted()) {
                return Err(CliError::Usage(format!("record `{}` exists; use `repo set`", rec.local_id)));
            }
            upsert(doc, rec, &file, &profile, ctx)
        }
        RepoCommand::Set(rec) => {
            let doc = load(&file)?;
            if doc.get(&rec.local_id).is_none() {
                return Err(CliError::Usage(format!("no record `{}`; use `repo add`", rec.local_id)));
            }
            upsert(doc, rec, &file, &profile, ctx)
        }
        RepoCommand::Remove { local_id } => {
            let doc = load(&file)?.delete_record(&local_id, ctx.now()).map_err(oryx_error)?;
            save(&file, &doc)?;
            writeln!(ctx.out, "withdrew {local_id}").map_err(io_error)
        }
        RepoCommand::Validate => {
            let doc = load(&file)?;
            let errors = report_findings(&doc, &profile, ctx)?;
            if errors > 0 {
                return Err(CliError::Invalid(format!("{errors} validation error(s)")));
            }
            writeln!(ctx.out, "{} records valid", doc.records.len()).map_err(io_error)
        }
        RepoCommand::Publish(publish) => {
            let doc = load(&file)?;
            let errors = report_findings(&doc, &profile, ctx)?;
            if errors > 0 && !publish.force {
                return Err(CliError::Invalid(format!(
                    "{errors} validation error(s); fix them or pass --force"
                )));
            }
            save(&publish.out, &doc)?;
            writeln!(ctx.out, "published {} records to {}", doc.records.len(), publish.out.display()).map_err(io_error)?;
            if let Some(url) = publish.public_url {
                writeln!(ctx.out, "vida suffix: {}", vida_suffix(&url)?).map_err(io_error)?;
            }
            Ok(())
        }
        RepoCommand::List => {
            let doc = load(&file)?;
            for r in &doc.records {
                let status = if r.is_deleted() { "deleted" } else { "active" };
                writeln!(ctx.out, "{}\t{}\t{status}", r.local_id, r.datestamp).map_err(io_error)?;
            }
            Ok(())
        }
    }
}

fn upsert(
    doc: RepositoryDocument,
    args: RecordArgs,
    file: &Path,
    profile: &ApplicationProfile,
    ctx: &mut Context<'_>,
) -> Result<(), CliError> {
    let record = build_record(&args.elements, &args.namespaces, profile)?;
    let (doc, findings) = doc
        .upsert_record(&args.local_id, record, ctx.now(), profile)
        .map_err(oryx_error)?;
    for finding in &findings {
        writeln!(ctx.err, "{}: {finding}", args.local_id).map_err(io_error)?;
    }
    save(file, &doc)?;
    writeln!(ctx.out, "stored {}", args.local_id).map_err(io_error)
}

/// Builds a record from element triples. Records always declare the OLAC and
/// DCMI terms namespaces.
pub fn build_record(elements: &[String], namespaces: &[String], profile: &ApplicationProfile) -> Result<MetadataRecord, CliError> {
    let mut record = MetadataRecord::new()
        .declare("olac", profile.olac_namespace_uri.clone())
        .declare("dcterms", xml::DCTERMS_NS);
    for ns in namespaces {
        let (prefix, uri) = ns
            .split_once('=')
            .filter(|(p, u)| !p.is_empty() && !u.is_empty())
            .ok_or_else(|| CliError::Usage(format!("namespace `{ns}`: expected PREFIX=URI")))?;
        record = record.declare(prefix, uri);
    }
    for spec in elements {
        record = record.push(parse_element(spec)?);
    }
    Ok(record)
}

/// Parses `TAG[,TYPE[,CODE]]=CONTENT`. `TAG` is a DC element name or a
/// `dcterms:` element refinement.
pub fn parse_element(spec: &str) -> Result<QualifiedElement, CliError> {
    let usage = |why: String| CliError::Usage(format!("element `{spec}`: {why}"));
    let (head, content) = spec
        .split_once('=')
        .ok_or_else(|| usage("expected TAG[,TYPE[,CODE]]=CONTENT".into()))?;
    let mut parts = head.split(',');
    let tag = parts.next().unwrap_or_default().trim();
    let type_ = parts.next().map(str::trim).filter(|s| !s.is_empty());
    let code = parts.next().map(str::trim).filter(|s| !s.is_empty());
    if parts.next().is_some() {
        return Err(usage("at most TAG, TYPE and CODE precede `=`".into()));
    }
    let mut element = match tag.strip_prefix("dcterms:") {
        Some(refinement) => {
            let parent = dcterms_refinement_parent(refinement)
                .ok_or_else(|| usage(format!("`{tag}` is not a known element refinement")))?;
            let mut e = QualifiedElement::new(parent, content);
            e.refinement_type = Some(QName::new("dcterms", refinement));
            e.element_refinement = true;
            e
        }
        None => {
            let tag: DcTag = tag.parse().map_err(|e: olac_core::model::NotDcTag| usage(e.to_string()))?;
            QualifiedElement::new(tag, content)
        }
    };
    if let Some(t) = type_ {
        if element.element_refinement {
            return Err(usage("element refinements take no type".into()));
        }
        element.refinement_type = Some(t.parse().map_err(|e: BadQName| usage(e.to_string()))?);
    }
    element.code = code.map(str::to_string);
    Ok(element)
}

/// The path suffix Vida addresses a published URL by.
pub fn vida_suffix(url: &str) -> Result<String, CliError> {
    if let Some(rest) = url.strip_prefix("https://") {
        Ok(format!("https/{rest}"))
    } else if let Some(rest) = url.strip_prefix("http://") {
        Ok(rest.to_string())
    } else {
        Err(CliError::Usage(format!("`{url}` is not an http or https URL")))
    }
}

fn report_findings(doc: &RepositoryDocument, profile: &ApplicationProfile, ctx: &mut Context<'_>) -> Result<usize, CliError> {
    let mut errors = 0;
    if let Err(e) = doc.check() {
        writeln!(ctx.out, "error: {e}").map_err(io_error)?;
        errors += 1;
    }
    for record in &doc.records {
        let Some(md) = &record.metadata else { continue };
        for finding in validate::validate_record(md, profile) {
            if finding.severity == Severity::Error {
                errors += 1;
            }
            writeln!(ctx.out, "{}: {finding}", record.local_id).map_err(io_error)?;
        }
    }
    Ok(errors)
}

fn init_fields(init: InitArgs) -> Result<(String, ArchiveDescription), CliError> {
    let interactive = std::io::stdin().is_terminal();
    let mut stdin = std::io::stdin().lock();
    let mut ask = |value: Option<String>, flag: &str, prompt: &str| -> Result<String, CliError> {
        if let Some(v) = value {
            return Ok(v);
        }
        if !interactive {
            return Err(CliError::Usage(format!("--{flag} is required")));
        }
        eprint!("{prompt}: ");
        let mut line = String::new();
        stdin.read_line(&mut line).map_err(io_error)?;
        Ok(line.trim().to_string())
    };
    let id = ask(init.id, "id", "Repository identifier")?;
    let description = ArchiveDescription {
        archive_name: ask(init.name, "name", "Archive name")?,
        archive_url: ask(init.url, "url", "Archive URL")?,
        curator: ask(init.curator, "curator", "Curator")?,
        location: ask(init.location, "location", "Location")?,
        institution_name: ask(init.institution, "institution", "Institution")?,
        institution_url: ask(init.institution_url, "institution-url", "Institution URL")?,
        synopsis: ask(init.synopsis, "synopsis", "Synopsis")?,
        access_terms: ask(init.access, "access", "Access terms")?,
    };
    description
        .check()
        .map_err(|e| CliError::Usage(format!("archive description: {e}")))?;
    Ok((id, description))
}

pub fn load(file: &Path) -> Result<RepositoryDocument, CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| {
        CliError::Environment(format!("cannot read {}: {e} (run `olac repo init` first)", file.display()))
    })?;
    parse_repository(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", file.display())))
}

pub fn save(file: &Path, doc: &RepositoryDocument) -> Result<(), CliError> {
    let text = serialize_repository(doc).map_err(oryx_error)?;
    if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Environment(format!("{}: {e}", dir.display())))?;
    }
    let tmp = file.with_extension("xml.tmp");
    std::fs::write(&tmp, text)
        .and_then(|()| std::fs::rename(&tmp, file))
        .map_err(|e| CliError::Environment(format!("cannot write {}: {e}", file.display())))
}

fn oryx_error(e: OryxError) -> CliError {
    match e {
        OryxError::Rejected(findings) => CliError::Invalid(
            findings
                .iter()
                .filter(|f| f.severity == Severity::Error)
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ),
        other => CliError::Invalid(other.to_string()),
    }
}

pub(crate) fn io_error(e: std::io::Error) -> CliError {
    CliError::Environment(e.to_string())
}
