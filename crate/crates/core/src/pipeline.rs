//! End-to-end flow: load, extract, apply rules, validate, upsert. Also the
//! TOML configuration shared by the CLI and the service.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{
    extract_document, CompletionBackend, ExtractOptions, ExtractionReport, MetricTaxonomy, MockBackend,
};
use crate::ingest::{load_document, Document, DocumentMeta, IngestError, InputFormat, SourceKind};
use crate::rules::{apply_rules, KpiRecord, RuleSet};
use crate::store::{AuditLog, Clock, FixedClock, KpiStore, StoreError, SystemClock, SCHEMA_VERSION};
use crate::text_to_sql::{TextToSql, DEFAULT_MAX_RETRIES};
use crate::validation::{
    validate_record, validate_schema, Disposition, SchemaViolation, ValidatedRecord, ValidationOutcome,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Live,
}

/// Environment variables a live backend reads its endpoint and key from.
pub const LIVE_ENDPOINT_VAR: &str = "FINKPI_LIVE_ENDPOINT";
pub const LIVE_KEY_VAR: &str = "FINKPI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub seed: u64,
    pub malformed_rate: f64,
    pub fabrication_rate: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { kind: BackendKind::Mock, seed: 0, malformed_rate: 0.0, fabrication_rate: 0.0 }
    }
}

/// Metadata applied to ingested files that have no `.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DocumentDefaults {
    pub company: String,
    pub published_on: Option<NaiveDate>,
    pub source_kind: SourceKind,
    pub fiscal_year_end_month: u8,
}

impl Default for DocumentDefaults {
    fn default() -> Self {
        Self {
            company: "UNKNOWN".into(),
            published_on: None,
            source_kind: SourceKind::EarningsRelease,
            fiscal_year_end_month: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub store_path: Option<PathBuf>,
    pub audit_path: Option<PathBuf>,
    pub review_path: Option<PathBuf>,
    pub schema_version: u32,
    pub parallelism: usize,
    pub max_retries: u32,
    /// Timestamp written to every audit entry instead of the wall clock.
    pub fixed_clock: Option<DateTime<Utc>>,
    pub backend: BackendConfig,
    pub rules: RuleSet,
    pub documents: DocumentDefaults,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            store_path: None,
            audit_path: None,
            review_path: None,
            schema_version: SCHEMA_VERSION,
            parallelism: 4,
            max_retries: DEFAULT_MAX_RETRIES,
            fixed_clock: None,
            backend: BackendConfig::default(),
            rules: RuleSet::all_on(),
            documents: DocumentDefaults::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        for rate in [self.backend.malformed_rate, self.backend.fabrication_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(ConfigError::Invalid(format!("backend fault rate {rate} outside [0, 1]")));
            }
        }
        if !(1..=12).contains(&self.documents.fiscal_year_end_month) {
            return Err(ConfigError::Invalid("documents.fiscal_year_end_month outside 1..=12".into()));
        }
        for p in [&self.store_path, &self.audit_path, &self.review_path].into_iter().flatten() {
            if p.as_os_str().is_empty() || p.is_dir() {
                return Err(ConfigError::Invalid(format!("{} is not a file path", p.display())));
            }
        }
        Ok(())
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        match self.fixed_clock {
            Some(t) => Arc::new(FixedClock(t)),
            None => Arc::new(SystemClock),
        }
    }

    /// The completion backend. A live backend needs credentials in the
    /// environment; no live adapter is bundled, so it is refused here.
    pub fn completion_backend(&self) -> Result<Arc<dyn CompletionBackend>, ConfigError> {
        match self.backend.kind {
            BackendKind::Mock => Ok(Arc::new(
                MockBackend::new(self.backend.seed)
                    .with_malformed_rate(self.backend.malformed_rate)
                    .with_fabrication_rate(self.backend.fabrication_rate),
            )),
            BackendKind::Live => {
                if std::env::var_os(LIVE_ENDPOINT_VAR).is_none() || std::env::var_os(LIVE_KEY_VAR).is_none() {
                    return Err(ConfigError::Invalid(format!(
                        "live backend needs {LIVE_ENDPOINT_VAR} and {LIVE_KEY_VAR}; use kind = \"mock\" without credentials"
                    )));
                }
                Err(ConfigError::Invalid("no live backend adapter is built into this binary".into()))
            }
        }
    }

    pub fn open_audit(&self) -> io::Result<Arc<AuditLog>> {
        Ok(Arc::new(match &self.audit_path {
            Some(p) => AuditLog::open(p, self.clock())?,
            None => AuditLog::in_memory(self.clock()),
        }))
    }

    pub fn open_store(&self) -> Result<KpiStore, StoreError> {
        let audit = self.open_audit()?;
        let store = match &self.store_path {
            Some(p) => KpiStore::open(p, self.schema_version)?,
            None => KpiStore::in_memory(self.schema_version),
        };
        Ok(store.with_audit(audit))
    }

    pub fn open_review(&self) -> io::Result<ReviewLog> {
        match &self.review_path {
            Some(p) => ReviewLog::open(p),
            None => Ok(ReviewLog::in_memory()),
        }
    }

    pub fn pipeline(&self, taxonomy: MetricTaxonomy) -> Result<Pipeline, ConfigError> {
        Ok(Pipeline::new(taxonomy, self.completion_backend()?, self.rules).with_parallelism(self.parallelism))
    }

    pub fn agent(&self, taxonomy: MetricTaxonomy) -> Result<TextToSql, ConfigError> {
        Ok(TextToSql::new(taxonomy, self.completion_backend()?).with_max_retries(self.max_retries))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewReason {
    /// Validation flagged the record.
    Flagged,
    /// A rule refused the raw extraction.
    Rejected,
    /// The record breaks the store schema.
    SchemaViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub doc_id: String,
    pub reason: ReviewReason,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<KpiRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ValidationOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<SchemaViolation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// JSONL queue of records awaiting human review.
#[derive(Debug)]
pub struct ReviewLog {
    path: Option<PathBuf>,
    memory: Mutex<Vec<ReviewEntry>>,
}

impl ReviewLog {
    pub fn in_memory() -> Self {
        Self { path: None, memory: Mutex::new(Vec::new()) }
    }

    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        OpenOptions::new().append(true).create(true).open(&path)?;
        Ok(Self { path: Some(path), memory: Mutex::new(Vec::new()) })
    }

    pub fn append(&self, entries: &[ReviewEntry]) -> io::Result<()> {
        let mut memory = self.memory.lock().expect("review lock");
        match &self.path {
            Some(p) => {
                let mut buf = String::new();
                for e in entries {
                    buf.push_str(&serde_json::to_string(e).map_err(io::Error::other)?);
                    buf.push('\n');
                }
                OpenOptions::new().append(true).open(p)?.write_all(buf.as_bytes())
            }
            None => {
                memory.extend_from_slice(entries);
                Ok(())
            }
        }
    }

    pub fn entries(&self) -> io::Result<Vec<ReviewEntry>> {
        match &self.path {
            None => Ok(self.memory.lock().expect("review lock").clone()),
            Some(p) => fs::read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(io::Error::other))
                .collect(),
        }
    }
}

/// Everything produced for one document before it touches the store.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRun {
    pub doc_id: String,
    pub raw_count: usize,
    pub extraction_failures: usize,
    pub validated: Vec<ValidatedRecord>,
    pub review: Vec<ReviewEntry>,
}

impl DocumentRun {
    /// Records eligible for the store: accepted or corrected, schema-clean.
    pub fn storable(&self) -> Vec<KpiRecord> {
        self.validated
            .iter()
            .filter(|v| v.outcome.disposition != Disposition::Flagged && validate_schema(&v.record).is_empty())
            .map(|v| v.record.clone())
            .collect()
    }

    pub fn count(&self, d: Disposition) -> usize {
        self.validated.iter().filter(|v| v.outcome.disposition == d).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub doc_id: String,
    pub extracted: usize,
    pub accepted: usize,
    pub corrected: usize,
    pub flagged: usize,
    pub rejected: usize,
    pub extraction_failures: usize,
    pub inserted: usize,
    pub replaced: usize,
}

pub struct Pipeline {
    taxonomy: MetricTaxonomy,
    backend: Arc<dyn CompletionBackend>,
    rules: RuleSet,
    options: ExtractOptions,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("backend", &self.backend.name()).field("rules", &self.rules).finish()
    }
}

impl Pipeline {
    pub fn new(taxonomy: MetricTaxonomy, backend: Arc<dyn CompletionBackend>, rules: RuleSet) -> Self {
        Self { taxonomy, backend, rules, options: ExtractOptions::default() }
    }

    /// Offline pipeline with the mock backend and every rule on.
    pub fn mock() -> Self {
        Self::new(MetricTaxonomy::default(), Arc::new(MockBackend::new(0)), RuleSet::all_on())
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.options.parallelism = parallelism.max(1);
        self
    }

    pub fn with_rules(mut self, rules: RuleSet) -> Self {
        self.rules = rules;
        self
    }

    pub fn rules(&self) -> RuleSet {
        self.rules
    }

    pub fn taxonomy(&self) -> &MetricTaxonomy {
        &self.taxonomy
    }

    pub fn extract(&self, doc: &Document) -> ExtractionReport {
        extract_document(doc, self.backend.as_ref(), &self.taxonomy, &self.options)
    }

    pub fn run_document(&self, doc: &Document) -> DocumentRun {
        self.process(doc, &self.extract(doc))
    }

    /// Rules and validation over an existing extraction.
    pub fn process(&self, doc: &Document, report: &ExtractionReport) -> DocumentRun {
        let meta = doc.meta();
        let mut validated = Vec::new();
        let mut review = Vec::new();
        for f in &report.failures {
            review.push(ReviewEntry {
                doc_id: doc.doc_id.clone(),
                reason: ReviewReason::Rejected,
                metric: String::new(),
                record: None,
                outcome: None,
                violations: Vec::new(),
                detail: Some(format!("section {} failed after {} attempts: {}", f.section_id, f.attempts, f.error)),
            });
        }
        for raw in &report.records {
            match apply_rules(raw, &self.rules, &meta) {
                Ok(record) => {
                    let v = validate_record(record, doc);
                    let violations = validate_schema(&v.record);
                    if v.outcome.disposition == Disposition::Flagged || !violations.is_empty() {
                        review.push(ReviewEntry {
                            doc_id: doc.doc_id.clone(),
                            reason: if violations.is_empty() {
                                ReviewReason::Flagged
                            } else {
                                ReviewReason::SchemaViolation
                            },
                            metric: v.record.metric.clone(),
                            record: Some(v.record.clone()),
                            outcome: Some(v.outcome.clone()),
                            violations,
                            detail: None,
                        });
                    }
                    validated.push(v);
                }
                Err(rejection) => review.push(ReviewEntry {
                    doc_id: doc.doc_id.clone(),
                    reason: ReviewReason::Rejected,
                    metric: rejection.metric.clone(),
                    record: None,
                    outcome: None,
                    violations: Vec::new(),
                    detail: Some(rejection.to_string()),
                }),
            }
        }
        DocumentRun {
            doc_id: doc.doc_id.clone(),
            raw_count: report.records.len(),
            extraction_failures: report.failures.len(),
            validated,
            review,
        }
    }

    /// Run one document and upsert what passes; everything else goes to
    /// the review log.
    pub fn ingest_document(
        &self,
        doc: &Document,
        store: &KpiStore,
        review: &ReviewLog,
    ) -> Result<IngestReport, StoreError> {
        let run = self.run_document(doc);
        let upsert = store.upsert_records(&run.storable())?;
        review.append(&run.review)?;
        Ok(IngestReport {
            doc_id: run.doc_id.clone(),
            extracted: run.raw_count,
            accepted: run.count(Disposition::Accepted),
            corrected: run.count(Disposition::Corrected),
            flagged: run.count(Disposition::Flagged),
            rejected: run.raw_count - run.validated.len(),
            extraction_failures: run.extraction_failures,
            inserted: upsert.inserted,
            replaced: upsert.replaced,
        })
    }
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: unsupported file type")]
    UnsupportedType { path: PathBuf },
    #[error("{path}: invalid metadata sidecar: {message}")]
    Sidecar { path: PathBuf, message: String },
    #[error("{path}: no published_on date (add a .meta.json sidecar or documents.published_on)")]
    MissingDate { path: PathBuf },
    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    doc_id: Option<String>,
    source_kind: Option<SourceKind>,
    company: Option<String>,
    published_on: Option<NaiveDate>,
    fiscal_year_end_month: Option<u8>,
}

/// Path of the optional metadata file next to a document.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Load a `.txt` or `.html` file with metadata from its sidecar, falling
/// back to the configured defaults. The document id defaults to the file stem.
pub fn load_file(path: &Path, defaults: &DocumentDefaults) -> Result<Document, FileError> {
    let format = path
        .extension()
        .and_then(|e| e.to_str())
        .and_then(InputFormat::from_extension)
        .ok_or_else(|| FileError::UnsupportedType { path: path.to_path_buf() })?;
    let bytes = fs::read(path).map_err(|source| FileError::Read { path: path.to_path_buf(), source })?;
    let side = sidecar_path(path);
    let sidecar: Option<Sidecar> = match fs::read_to_string(&side) {
        Ok(text) => Some(
            serde_json::from_str(&text)
                .map_err(|e| FileError::Sidecar { path: side.clone(), message: e.to_string() })?,
        ),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(source) => return Err(FileError::Read { path: side, source }),
    };
    let sc = sidecar.unwrap_or(Sidecar {
        doc_id: None,
        source_kind: None,
        company: None,
        published_on: None,
        fiscal_year_end_month: None,
    });
    let meta = DocumentMeta {
        doc_id: sc.doc_id.unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned()),
        source_kind: sc.source_kind.unwrap_or(defaults.source_kind),
        company: sc.company.unwrap_or_else(|| defaults.company.clone()),
        published_on: sc
            .published_on
            .or(defaults.published_on)
            .ok_or_else(|| FileError::MissingDate { path: path.to_path_buf() })?,
        fiscal_year_end_month: sc.fiscal_year_end_month.unwrap_or(defaults.fiscal_year_end_month),
    };
    load_document(&bytes, format, meta).map_err(|source| FileError::Ingest { path: path.to_path_buf(), source })
}

/// Expand directories (non-recursively, sorted) into document files.
pub fn collect_inputs(paths: &[PathBuf]) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.is_file() && !e.to_string_lossy().ends_with(".meta.json"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}
