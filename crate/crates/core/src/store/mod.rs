//! Embedded single-file KPI store with a schema gate, SQL access, an audit
//! trail and schema-card export.

mod audit;
mod card;

pub use audit::{AuditEntry, AuditEvent, AuditLog, Clock, FixedClock, SystemClock, UpsertAction};
pub use card::{ColumnCard, MetricCard, SchemaCard, UnitSemantics};

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::MetricTaxonomy;
use crate::rules::{Basis, Granularity, KpiRecord, RecordKey, Status, Unit};
use crate::sql::{self, Cell, ColumnDef, ColumnType, ResultTable, SqlError, Table};
use crate::validation::{validate_schema, SchemaViolation};

pub const TABLE: &str = "kpi";
pub const SCHEMA_VERSION: u32 = 1;
const FORMAT: &str = "finkpi-store";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("store file is corrupt: {0}")]
    Corrupt(String),
    #[error("SchemaVersionMismatch: store has version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("GateViolation: record {key} violates {violations:?}; batch rejected")]
    GateViolation { key: RecordKey, violations: Vec<SchemaViolation> },
    #[error(transparent)]
    Sql(#[from] SqlError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsertReport {
    pub inserted: usize,
    pub replaced: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFilter {
    pub metric: Option<String>,
    pub year: Option<i32>,
    pub status: Option<Status>,
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub records: Vec<KpiRecord>,
}

pub const DEFAULT_PAGE_SIZE: usize = 25;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Serialize, Deserialize)]
struct StoreFile {
    format: String,
    schema_version: u32,
    table: String,
    records: Vec<KpiRecord>,
}

/// The `kpi` table. Single writer, many readers: writes build a new
/// snapshot, persist it atomically, then publish it.
#[derive(Debug)]
pub struct KpiStore {
    path: Option<PathBuf>,
    schema_version: u32,
    state: RwLock<Arc<BTreeMap<RecordKey, KpiRecord>>>,
    audit: Arc<AuditLog>,
}

struct ColumnSpec {
    name: &'static str,
    ty: ColumnType,
    semantics: UnitSemantics,
    aliases: &'static [&'static str],
}

const COLUMNS: [ColumnSpec; 15] = [
    ColumnSpec {
        name: "metric",
        ty: ColumnType::Text,
        semantics: UnitSemantics::Category,
        aliases: &["kpi", "measure name"],
    },
    ColumnSpec {
        name: "value",
        ty: ColumnType::Decimal,
        semantics: UnitSemantics::Measure,
        aliases: &["amount", "figure"],
    },
    ColumnSpec {
        name: "value_low",
        ty: ColumnType::Decimal,
        semantics: UnitSemantics::Measure,
        aliases: &["lower bound"],
    },
    ColumnSpec {
        name: "value_high",
        ty: ColumnType::Decimal,
        semantics: UnitSemantics::Measure,
        aliases: &["upper bound"],
    },
    ColumnSpec { name: "unit", ty: ColumnType::Text, semantics: UnitSemantics::Category, aliases: &["currency"] },
    ColumnSpec {
        name: "scale_applied",
        ty: ColumnType::Decimal,
        semantics: UnitSemantics::Multiplier,
        aliases: &["scale"],
    },
    ColumnSpec {
        name: "period_granularity",
        ty: ColumnType::Text,
        semantics: UnitSemantics::Category,
        aliases: &["quarter", "fiscal period"],
    },
    ColumnSpec {
        name: "period_year",
        ty: ColumnType::Int,
        semantics: UnitSemantics::Year,
        aliases: &["fiscal year", "year"],
    },
    ColumnSpec {
        name: "basis",
        ty: ColumnType::Text,
        semantics: UnitSemantics::Category,
        aliases: &["GAAP basis", "accounting basis"],
    },
    ColumnSpec {
        name: "status",
        ty: ColumnType::Text,
        semantics: UnitSemantics::Category,
        aliases: &["actual or guidance"],
    },
    ColumnSpec {
        name: "confidence",
        ty: ColumnType::Decimal,
        semantics: UnitSemantics::Probability,
        aliases: &["score"],
    },
    ColumnSpec {
        name: "company",
        ty: ColumnType::Text,
        semantics: UnitSemantics::Identifier,
        aliases: &["ticker", "issuer"],
    },
    ColumnSpec { name: "doc_id", ty: ColumnType::Text, semantics: UnitSemantics::Identifier, aliases: &["document"] },
    ColumnSpec {
        name: "section_id",
        ty: ColumnType::Text,
        semantics: UnitSemantics::Identifier,
        aliases: &["section"],
    },
    ColumnSpec {
        name: "published_on",
        ty: ColumnType::Date,
        semantics: UnitSemantics::Date,
        aliases: &["publication date"],
    },
];

/// Comma-separated column list, in table order.
pub const COLUMNS_SQL: &str = "metric, value, value_low, value_high, unit, scale_applied, period_granularity, period_year, basis, status, confidence, company, doc_id, section_id, published_on";

/// The `kpi` table's columns in order.
pub fn columns() -> Vec<ColumnDef> {
    COLUMNS.iter().map(|c| ColumnDef::new(c.name, c.ty)).collect()
}

fn enum_domain(name: &str) -> Vec<String> {
    let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
    match name {
        "unit" => owned(&[Unit::USD.as_str(), Unit::Percent.as_str(), Unit::Count.as_str()]),
        "period_granularity" => Granularity::ALL.iter().map(|g| g.as_str().to_string()).collect(),
        "basis" => Basis::ALL.iter().map(|b| b.as_str().to_string()).collect(),
        "status" => Status::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        _ => Vec::new(),
    }
}

/// One record as a `kpi` row.
pub fn record_row(r: &KpiRecord) -> Vec<Cell> {
    vec![
        Cell::Text(r.metric.clone()),
        Cell::Decimal(r.value),
        Cell::Decimal(r.value_low),
        Cell::Decimal(r.value_high),
        Cell::Text(r.unit.as_str().to_string()),
        Cell::Decimal(r.scale_applied),
        Cell::Text(r.period.granularity.as_str().to_string()),
        Cell::Int(i64::from(r.period.year)),
        Cell::Text(r.qualifier.basis.as_str().to_string()),
        Cell::Text(r.qualifier.status.as_str().to_string()),
        Cell::Decimal(r.confidence),
        Cell::Text(r.company.clone()),
        Cell::Text(r.provenance.doc_id.clone()),
        Cell::Text(r.provenance.section_id.clone()),
        Cell::Date(r.published_on),
    ]
}

/// Build a `kpi` table over arbitrary records.
pub fn table_of<'a>(records: impl IntoIterator<Item = &'a KpiRecord>) -> Table {
    Table { name: TABLE.to_string(), columns: columns(), rows: records.into_iter().map(record_row).collect() }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl KpiStore {
    pub fn in_memory(schema_version: u32) -> Self {
        Self {
            path: None,
            schema_version,
            state: RwLock::new(Arc::new(BTreeMap::new())),
            audit: Arc::new(AuditLog::in_memory(Arc::new(SystemClock))),
        }
    }

    /// Open the store at `path`, creating it if absent.
    pub fn open(path: impl AsRef<Path>, schema_version: u32) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let records = match fs::read(&path) {
            Ok(bytes) => {
                let file: StoreFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
                if file.format != FORMAT || file.table != TABLE {
                    return Err(StoreError::Corrupt(format!("unexpected format {}/{}", file.format, file.table)));
                }
                if file.schema_version != schema_version {
                    return Err(StoreError::SchemaVersionMismatch {
                        found: file.schema_version,
                        expected: schema_version,
                    });
                }
                file.records.into_iter().map(|r| (r.key(), r)).collect()
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                let empty = BTreeMap::new();
                Self::persist(&path, schema_version, &empty)?;
                empty
            }
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            path: Some(path),
            schema_version,
            state: RwLock::new(Arc::new(records)),
            audit: Arc::new(AuditLog::in_memory(Arc::new(SystemClock))),
        })
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = audit;
        self
    }

    pub fn audit(&self) -> &Arc<AuditLog> {
        &self.audit
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    fn snapshot(&self) -> Arc<BTreeMap<RecordKey, KpiRecord>> {
        self.state.read().expect("store lock").clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records in key order.
    pub fn records(&self) -> Vec<KpiRecord> {
        self.snapshot().values().cloned().collect()
    }

    pub fn get(&self, key: &RecordKey) -> Option<KpiRecord> {
        self.snapshot().get(key).cloned()
    }

    fn persist(path: &Path, schema_version: u32, records: &BTreeMap<RecordKey, KpiRecord>) -> Result<(), StoreError> {
        let file = StoreFile {
            format: FORMAT.to_string(),
            schema_version,
            table: TABLE.to_string(),
            records: records.values().cloned().collect(),
        };
        let mut bytes = serde_json::to_vec(&file).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        bytes.push(b'\n');
        write_atomically(path, &bytes)?;
        Ok(())
    }

    /// Insert or replace records by key. The whole batch is refused if any
    /// record fails the schema gate.
    pub fn upsert_records(&self, records: &[KpiRecord]) -> Result<UpsertReport, StoreError> {
        for r in records {
            let violations = validate_schema(r);
            if !violations.is_empty() {
                return Err(StoreError::GateViolation { key: r.key(), violations });
            }
        }
        let mut guard = self.state.write().expect("store lock");
        let mut next = (**guard).clone();
        let mut report = UpsertReport::default();
        let mut events = Vec::with_capacity(records.len());
        for r in records {
            let key = r.key();
            let action = match next.insert(key.clone(), r.clone()) {
                None => {
                    report.inserted += 1;
                    UpsertAction::Inserted
                }
                Some(_) => {
                    report.replaced += 1;
                    UpsertAction::Replaced
                }
            };
            events.push(AuditEvent::Upsert { key, action });
        }
        if let Some(path) = &self.path {
            Self::persist(path, self.schema_version, &next)?;
        }
        debug_assert!(next.values().all(|r| validate_schema(r).is_empty()));
        *guard = Arc::new(next);
        drop(guard);
        self.audit.append_all(events)?;
        Ok(report)
    }

    pub fn table(&self) -> Table {
        table_of(self.snapshot().values())
    }

    /// Run a read-only query.
    pub fn execute_sql(&self, sql: &str) -> Result<ResultTable, StoreError> {
        Ok(sql::query(&self.table(), sql)?)
    }

    pub fn export_schema_card(&self, taxonomy: &MetricTaxonomy) -> SchemaCard {
        let snapshot = self.snapshot();
        SchemaCard {
            table: TABLE.to_string(),
            schema_version: self.schema_version,
            columns: COLUMNS
                .iter()
                .map(|c| ColumnCard {
                    name: c.name.to_string(),
                    logical_type: c.ty,
                    unit_semantics: c.semantics,
                    aliases: c.aliases.iter().map(|a| a.to_string()).collect(),
                    values: enum_domain(c.name),
                })
                .collect(),
            metrics: SchemaCard::metrics_from(taxonomy),
            sample_rows: sample(&snapshot).into_iter().map(record_row).collect(),
        }
    }

    pub fn page(&self, filter: &RecordFilter) -> RecordPage {
        let limit = filter.limit.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, MAX_PAGE_SIZE);
        let snapshot = self.snapshot();
        let matching: Vec<&KpiRecord> = snapshot
            .values()
            .filter(|r| filter.metric.as_ref().is_none_or(|m| &r.metric == m))
            .filter(|r| filter.year.is_none_or(|y| r.period.year == y))
            .filter(|r| filter.status.is_none_or(|s| r.qualifier.status == s))
            .collect();
        RecordPage {
            total: matching.len(),
            offset: filter.offset,
            limit,
            records: matching.into_iter().skip(filter.offset).take(limit).cloned().collect(),
        }
    }
}

/// Up to three rows, preferring distinct metrics.
fn sample(records: &BTreeMap<RecordKey, KpiRecord>) -> Vec<&KpiRecord> {
    let mut out: Vec<&KpiRecord> = Vec::new();
    for r in records.values() {
        if out.len() == 3 {
            return out;
        }
        if out.iter().all(|o| o.metric != r.metric) {
            out.push(r);
        }
    }
    for r in records.values() {
        if out.len() == 3 {
            break;
        }
        if !out.iter().any(|o| std::ptr::eq(*o, r)) {
            out.push(r);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Provenance;
    use crate::ingest::CharRange;
    use crate::rules::{FiscalPeriod, Qualifier, RuleName};
    use chrono::NaiveDate;
    use rust_decimal::Decimal;
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn column_list_matches_table() {
        let names: Vec<String> = columns().into_iter().map(|c| c.name).collect();
        assert_eq!(COLUMNS_SQL.split(", ").collect::<Vec<_>>(), names);
    }

    pub(crate) fn rec(
        metric: &str,
        value: &str,
        g: Granularity,
        year: i32,
        status: Status,
        section: &str,
    ) -> KpiRecord {
        let unit = if metric.ends_with("margin") { Unit::Percent } else { Unit::USD };
        KpiRecord {
            metric: metric.into(),
            value: d(value),
            value_low: d(value),
            value_high: d(value),
            unit,
            scale_applied: Decimal::ONE,
            period: FiscalPeriod::explicit(g, year),
            qualifier: Qualifier { basis: Basis::Unstated, status },
            confidence: Decimal::ONE,
            provenance: Provenance {
                doc_id: "d1".into(),
                section_id: section.into(),
                char_range: CharRange::new(0, 3),
            },
            rules_applied: RuleName::ALL.to_vec(),
            qualifier_cues: vec![],
            company: "ACME".into(),
            published_on: NaiveDate::from_ymd_opt(2025, 2, 1).unwrap(),
        }
    }

    fn four() -> Vec<KpiRecord> {
        vec![
            rec("operating_margin", "14.6", Granularity::Q4, 2024, Status::Actual, "s0"),
            rec("operating_margin", "14.4", Granularity::Q4, 2023, Status::Actual, "s0"),
            rec("operating_margin", "16.0", Granularity::FY, 2025, Status::Guidance, "s0"),
            rec("revenue", "2520000000", Granularity::Q4, 2024, Status::Actual, "s1"),
        ]
    }

    #[test]
    fn upsert_is_idempotent() {
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        assert_eq!(store.upsert_records(&four()).unwrap(), UpsertReport { inserted: 4, replaced: 0 });
        assert_eq!(store.upsert_records(&four()).unwrap(), UpsertReport { inserted: 0, replaced: 4 });
        assert_eq!(store.len(), 4);
        let audit = store.audit().entries().unwrap();
        assert_eq!(audit.len(), 8);
        for r in store.records() {
            assert!(audit.iter().any(|e| matches!(&e.event, AuditEvent::Upsert { key, .. } if *key == r.key())));
        }
    }

    #[test]
    fn gate_rejects_whole_batch() {
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        let mut batch = four();
        batch[2].period = FiscalPeriod::unresolved();
        let err = store.upsert_records(&batch).unwrap_err();
        assert!(
            matches!(err, StoreError::GateViolation { ref violations, .. } if violations == &[SchemaViolation::UnresolvedPeriod])
        );
        assert!(store.is_empty());
        assert!(store.audit().entries().unwrap().is_empty());
    }

    #[test]
    fn file_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kpi.json");
        {
            let store = KpiStore::open(&path, SCHEMA_VERSION).unwrap();
            assert!(store.is_empty());
            store.upsert_records(&four()).unwrap();
        }
        let store = KpiStore::open(&path, SCHEMA_VERSION).unwrap();
        assert_eq!(store.records(), {
            let mut v = four();
            v.sort_by_key(KpiRecord::key);
            v
        });
        assert!(matches!(
            KpiStore::open(&path, SCHEMA_VERSION + 1),
            Err(StoreError::SchemaVersionMismatch { found: 1, expected: 2 })
        ));
        fs::write(&path, "not json").unwrap();
        assert!(matches!(KpiStore::open(&path, SCHEMA_VERSION), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn sql_over_store() {
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        assert_eq!(store.execute_sql("SELECT COUNT(*) FROM kpi").unwrap().rows, vec![vec![Cell::Int(0)]]);
        store.upsert_records(&four()).unwrap();
        let r = store
            .execute_sql("SELECT value FROM kpi WHERE metric='operating_margin' AND period_granularity='Q4' AND period_year=2024 AND status='Actual'")
            .unwrap();
        assert_eq!(r.rows, vec![vec![Cell::Decimal(d("14.6"))]]);
        assert!(matches!(store.execute_sql("DROP TABLE kpi"), Err(StoreError::Sql(SqlError::NonSelectRejected(_)))));
        assert!(matches!(store.execute_sql("SELEC 1"), Err(StoreError::Sql(SqlError::NonSelectRejected(_)))));
        assert!(matches!(store.execute_sql("SELECT FROM"), Err(StoreError::Sql(SqlError::SqlSyntaxError { .. }))));
    }

    #[test]
    fn schema_card() {
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        let t = MetricTaxonomy::default();
        let card = store.export_schema_card(&t);
        assert_eq!(card.columns.len(), 15);
        assert!(card.sample_rows.is_empty());
        let mut many = Vec::new();
        for y in 2015..2025 {
            many.push(rec("revenue", "1", Granularity::FY, y, Status::Actual, "s0"));
        }
        store.upsert_records(&many).unwrap();
        let card = store.export_schema_card(&t);
        assert_eq!(card.sample_rows.len(), 3);
        assert_eq!(card.metric_unit("operating_margin"), Some(Unit::Percent));
        assert_eq!(card.column("status").unwrap().values, vec!["Actual", "Guidance"]);
        let json = serde_json::to_string(&card).unwrap();
        assert_eq!(serde_json::from_str::<SchemaCard>(&json).unwrap(), card);
        assert_eq!(KpiStore::in_memory(7).export_schema_card(&t).schema_version, 7);
        assert!(card.to_prompt_text().contains("- period_year INT"));
    }

    #[test]
    fn paging() {
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        let mut many = Vec::new();
        for y in 2000..2060 {
            many.push(rec("revenue", "1", Granularity::FY, y, Status::Actual, "s0"));
        }
        many.push(rec("operating_margin", "1", Granularity::FY, 2020, Status::Actual, "s0"));
        store.upsert_records(&many).unwrap();
        let p = store.page(&RecordFilter { metric: Some("revenue".into()), offset: 50, ..Default::default() });
        assert_eq!((p.total, p.records.len(), p.limit), (60, 10, 25));
        let p = store.page(&RecordFilter { year: Some(2020), ..Default::default() });
        assert_eq!(p.total, 2);
    }
}
