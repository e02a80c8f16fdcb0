//! Command-line front end: `finkpi ingest|query|serve|eval|ablate`.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use finkpi::eval::{generate_synthetic_corpus, run_ablation, EvalOptions, Harness};
use finkpi::extraction::MetricTaxonomy;
use finkpi::pipeline::{collect_inputs, load_file, PipelineConfig};
use finkpi::rules::{RuleName, RuleSet};
use finkpi::text_to_sql::{AnswerBundle, IntentError, QueryError};

use crate::api::{router, AppState};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CLARIFY: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "finkpi", version, about = "Extract KPIs from financial filings and query them in plain English")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML pipeline configuration.
    #[arg(long, global = true, env = "FINKPI_CONFIG")]
    pub config: Option<PathBuf>,
    /// Disable a rule by name; repeatable.
    #[arg(long = "no-rule", global = true, value_name = "RULE")]
    pub no_rule: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, extract, normalize, validate and store documents.
    Ingest {
        /// Files or directories of .txt/.html filings.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Answer one question against the store.
    Query {
        question: String,
        /// Print the answer bundle as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Require this bearer token on every route except /health.
        #[arg(long, env = "FINKPI_BEARER_TOKEN")]
        token: Option<String>,
    },
    /// Score the pipeline on a synthetic corpus.
    Eval(EvalArgs),
    /// Compare rule configurations on a synthetic corpus.
    Ablate(EvalArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    /// Questions to score; 0 skips query scoring.
    #[arg(long, default_value_t = 200)]
    pub questions: usize,
    /// Also run the rule ablation matrix.
    #[arg(long)]
    pub ablate: bool,
    /// Print JSON instead of Markdown.
    #[arg(long)]
    pub json: bool,
    /// Write reports (and for `eval`, the store and audit log) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load_config(global: &GlobalArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.rules.disable_named(&global.no_rule)?;
    Ok(cfg)
}

/// Held for the duration of a write command; a second writer fails fast.
struct WriterLock(PathBuf);

impl WriterLock {
    fn acquire(store: &Path) -> anyhow::Result<Self> {
        let mut name = store.file_name().unwrap_or_default().to_os_string();
        name.push(".lock");
        let path = store.with_file_name(name);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| format!("store is locked by another writer ({})", path.display()))?;
        writeln!(f, "{}", std::process::id())?;
        Ok(Self(path))
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn ingest(cfg: &PipelineConfig, paths: &[PathBuf], out: &mut dyn Write) -> anyhow::Result<u8> {
    let _lock = cfg.store_path.as_deref().map(WriterLock::acquire).transpose()?;
    let store = cfg.open_store()?;
    let review = cfg.open_review()?;
    let pipeline = cfg.pipeline(MetricTaxonomy::default())?;
    let files = collect_inputs(paths)?;
    let mut failed = 0;
    for path in &files {
        let outcome = load_file(path, &cfg.documents)
            .map_err(anyhow::Error::from)
            .and_then(|doc| Ok(pipeline.ingest_document(&doc, &store, &review)?));
        match outcome {
            Ok(r) => writeln!(
                out,
                "{}: {} extracted, {} accepted, {} corrected, {} flagged, {} rejected, {} stored",
                path.display(),
                r.extracted,
                r.accepted,
                r.corrected,
                r.flagged,
                r.rejected + r.extraction_failures,
                r.inserted + r.replaced
            )?,
            Err(e) => {
                failed += 1;
                writeln!(out, "{}: error: {e:#}", path.display())?;
            }
        }
    }
    writeln!(out, "{} files, {} failed, {} records in store", files.len(), failed, store.len())?;
    Ok(if !files.is_empty() && failed == files.len() { EXIT_FAILURE } else { EXIT_OK })
}

fn render_bundle(b: &AnswerBundle, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "SQL: {}", b.candidate.sql)?;
    writeln!(out, "{}", b.explanation)?;
    let v = &b.validation;
    writeln!(
        out,
        "Checks: syntax {}, units {}, periods {}, qualifiers {} ({} attempt{}, {})",
        mark(v.syntax_ok),
        mark(v.unit_consistent),
        mark(v.temporal_aligned),
        mark(v.qualifier_correct),
        b.attempts,
        if b.attempts == 1 { "" } else { "s" },
        b.audit_id
    )?;
    if b.result.columns.is_empty() {
        return Ok(());
    }
    let header: Vec<String> = b.result.columns.iter().map(|c| c.name.clone()).collect();
    let rows: Vec<Vec<String>> = b.result.rows.iter().map(|r| r.iter().map(|c| c.to_string()).collect()).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    writeln!(out, "{}", line(&header))?;
    writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"))?;
    for r in &rows {
        writeln!(out, "{}", line(r))?;
    }
    writeln!(out, "({} row{})", b.result.row_count, if b.result.row_count == 1 { "" } else { "s" })
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn query(
    cfg: &PipelineConfig,
    question: &str,
    json: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> anyhow::Result<u8> {
    let taxonomy = MetricTaxonomy::default();
    let store = cfg.open_store()?;
    let agent = cfg.agent(taxonomy.clone())?;
    match agent.answer(&store, question) {
        Ok(bundle) if json => {
            writeln!(out, "{}", serde_json::to_string_pretty(&bundle)?)?;
            Ok(EXIT_OK)
        }
        Ok(bundle) => {
            render_bundle(&bundle, out)?;
            Ok(EXIT_OK)
        }
        Err(QueryError::ClarificationNeeded(e)) => {
            writeln!(err, "clarification needed: {e}")?;
            if matches!(e, IntentError::UnrecognizedMetric { .. }) {
                let known: Vec<&str> = taxonomy.entries().iter().map(|m| m.canonical_name.as_str()).collect();
                writeln!(err, "hint: ask about one of {}", known.join(", "))?;
            }
            Ok(EXIT_CLARIFY)
        }
        Err(e) => bail!(e),
    }
}

fn eval_options(args: &EvalArgs, cfg: &PipelineConfig) -> EvalOptions {
    EvalOptions { question_limit: Some(args.questions), parallelism: cfg.parallelism, backend_seed: cfg.backend.seed }
}

fn ablation_matrix(cfg: &PipelineConfig) -> Vec<RuleSet> {
    if cfg.rules != RuleSet::all_on() {
        return vec![RuleSet::all_on(), cfg.rules];
    }
    let mut m = vec![RuleSet::all_on(), RuleSet::all_off()];
    m.extend(RuleName::ALL.iter().map(|r| RuleSet::all_on().without(*r)));
    m
}

fn write_file(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    let mut f = File::create(dir.join(name))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn eval(cfg: &PipelineConfig, args: &EvalArgs, ablate: bool, out: &mut dyn Write) -> anyhow::Result<u8> {
    if args.docs == 0 {
        bail!("--docs must be at least 1");
    }
    let harness = Harness::new(generate_synthetic_corpus(args.seed, args.docs), eval_options(args, cfg));
    if !ablate {
        let run = harness.run(cfg.rules);
        let text = if args.json { run.report.to_json() } else { run.report.to_markdown() };
        write!(out, "{text}")?;
        if let Some(dir) = &args.out {
            run.write_to(dir)?;
        }
        if !args.ablate {
            return Ok(EXIT_OK);
        }
        writeln!(out)?;
    }
    let report = run_ablation(&harness, &ablation_matrix(cfg));
    let text = if args.json { report.to_json() } else { report.to_markdown() };
    write!(out, "{text}")?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        write_file(dir, "ablation.json", &report.to_json())?;
        write_file(dir, "ablation.md", &report.to_markdown())?;
    }
    Ok(EXIT_OK)
}

pub async fn serve(cfg: &PipelineConfig, addr: SocketAddr, token: Option<String>) -> anyhow::Result<u8> {
    let store = cfg.open_store()?;
    let agent = cfg.agent(MetricTaxonomy::default())?;
    let state = AppState::new(store, agent).with_bearer_token(token);
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, records = state.store.len(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(EXIT_OK)
}

pub async fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = load_config(&cli.global)?;
    let mut stdout = std::io::stdout().lock();
    match &cli.command {
        Command::Ingest { paths } => ingest(&cfg, paths, &mut stdout),
        Command::Query { question, json } => query(&cfg, question, *json, &mut stdout, &mut std::io::stderr()),
        Command::Serve { addr, token } => {
            drop(stdout);
            serve(&cfg, *addr, token.clone()).await
        }
        Command::Eval(args) => eval(&cfg, args, false, &mut stdout),
        Command::Ablate(args) => eval(&cfg, args, true, &mut stdout),
    }
}
