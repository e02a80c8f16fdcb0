use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::rules::RecordKey;

/// Time source; tests and reproducible runs inject a fixed clock.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl FixedClock {
    /// 2025-01-01T00:00:00Z.
    pub fn epoch() -> Self {
        Self(DateTime::from_timestamp(1_735_689_600, 0).expect("valid timestamp"))
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsertAction {
    Inserted,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Upsert {
        key: RecordKey,
        action: UpsertAction,
    },
    Query {
        question: String,
        sql: Option<String>,
        attempts: u32,
        row_count: usize,
        passed_validation: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Error {
        context: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub audit_id: String,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: AuditEvent,
}

struct Inner {
    next: u64,
    path: Option<PathBuf>,
    memory: Vec<AuditEntry>,
}

/// Append-only JSONL audit trail with sequential ids.
pub struct AuditLog {
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.lock().expect("audit lock");
        f.debug_struct("AuditLog").field("path", &inner.path).field("next", &inner.next).finish()
    }
}

fn format_id(seq: u64) -> String {
    format!("audit-{seq:08}")
}

impl AuditLog {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self { clock, inner: Mutex::new(Inner { next: 1, path: None, memory: Vec::new() }) }
    }

    /// Open (or create) a log file; numbering continues after existing lines.
    pub fn open(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let existing = match File::open(&path) {
            Ok(f) => {
                BufReader::new(f).lines().filter(|l| l.as_ref().is_ok_and(|l| !l.trim().is_empty())).count() as u64
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                File::create(&path)?;
                0
            }
            Err(e) => return Err(e),
        };
        Ok(Self { clock, inner: Mutex::new(Inner { next: existing + 1, path: Some(path), memory: Vec::new() }) })
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.inner.lock().expect("audit lock").path.clone()
    }

    pub fn append(&self, event: AuditEvent) -> io::Result<String> {
        Ok(self.append_all(vec![event])?.pop().unwrap_or_default())
    }

    /// Append several events under one lock, in order.
    pub fn append_all(&self, events: Vec<AuditEvent>) -> io::Result<Vec<String>> {
        let mut inner = self.inner.lock().expect("audit lock");
        let at = self.clock.now();
        let mut entries = Vec::with_capacity(events.len());
        for event in events {
            let audit_id = format_id(inner.next);
            inner.next += 1;
            entries.push(AuditEntry { audit_id, at, event });
        }
        let ids = entries.iter().map(|e| e.audit_id.clone()).collect();
        match inner.path.clone() {
            Some(path) => {
                let mut buf = String::new();
                for e in &entries {
                    buf.push_str(&serde_json::to_string(e).map_err(io::Error::other)?);
                    buf.push('\n');
                }
                let mut f = OpenOptions::new().append(true).create(true).open(path)?;
                f.write_all(buf.as_bytes())?;
                f.flush()?;
            }
            None => inner.memory.extend(entries),
        }
        Ok(ids)
    }

    pub fn entries(&self) -> io::Result<Vec<AuditEntry>> {
        let inner = self.inner.lock().expect("audit lock");
        match &inner.path {
            None => Ok(inner.memory.clone()),
            Some(path) => BufReader::new(File::open(path)?)
                .lines()
                .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
                .map(|l| serde_json::from_str(&l?).map_err(io::Error::other))
                .collect(),
        }
    }

    pub fn find(&self, audit_id: &str) -> io::Result<Option<AuditEntry>> {
        Ok(self.entries()?.into_iter().find(|e| e.audit_id == audit_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(msg: &str) -> AuditEvent {
        AuditEvent::Error { context: "test".into(), message: msg.into() }
    }

    #[test]
    fn file_log_continues_numbering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logs/audit.jsonl");
        let clock: Arc<dyn Clock> = Arc::new(FixedClock::epoch());
        let log = AuditLog::open(&path, clock.clone()).unwrap();
        assert_eq!(log.append(ev("a")).unwrap(), "audit-00000001");
        assert_eq!(log.append_all(vec![ev("b"), ev("c")]).unwrap(), vec!["audit-00000002", "audit-00000003"]);
        drop(log);
        let log = AuditLog::open(&path, clock).unwrap();
        assert_eq!(log.append(ev("d")).unwrap(), "audit-00000004");
        let entries = log.entries().unwrap();
        assert_eq!(entries.len(), 4);
        assert_eq!(log.find("audit-00000002").unwrap().unwrap().event, ev("b"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .starts_with(r#"{"audit_id":"audit-00000001","at":"2025-01-01T00:00:00Z","event":"error""#));
    }

    #[test]
    fn memory_log() {
        let log = AuditLog::in_memory(Arc::new(FixedClock::epoch()));
        log.append(ev("x")).unwrap();
        assert_eq!(log.entries().unwrap().len(), 1);
        assert!(log.find("audit-00000009").unwrap().is_none());
    }
}
