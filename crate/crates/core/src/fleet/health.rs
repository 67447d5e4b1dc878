//! Append-only health log, one JSON object per line.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum HealthEvent {
    Launched { attempt: u32 },
    LaunchFailed { reason: String },
    CycleStarted,
    CycleFinished { snapshots: usize, blocked: usize, failed: usize },
    Exited { code: Option<i32> },
    RestartScheduled { failures: u32, delay_seconds: u64 },
    MemoryBreach { rss_bytes: u64, limit_bytes: u64 },
    RestartDeferred { reason: RestartReason },
    ProactiveRestart { reason: RestartReason },
    GaveUp { failures: u32 },
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartReason {
    Memory,
    Daily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthRecord {
    pub agent: String,
    /// Per-agent sequence number, starting at 1 and gapless.
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: HealthEvent,
}

struct Inner {
    out: Box<dyn Write + Send>,
    seqs: HashMap<String, u64>,
}

/// The single writer all supervisors share. Sequence numbers are assigned
/// under the same lock as the write, so each agent's records appear in
/// sequence order.
#[derive(Clone)]
pub struct HealthLog {
    inner: Arc<Mutex<Inner>>,
}

impl HealthLog {
    pub fn new(out: impl Write + Send + 'static) -> Self {
        HealthLog {
            inner: Arc::new(Mutex::new(Inner {
                out: Box::new(out),
                seqs: HashMap::new(),
            })),
        }
    }

    /// Opens `path` for appending. Sequence numbers continue from any
    /// records already in the file.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut seqs = HashMap::new();
        if path.exists() {
            for r in read_health_log(&std::fs::read_to_string(path)?) {
                seqs.insert(r.agent.clone(), r.seq);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(HealthLog {
            inner: Arc::new(Mutex::new(Inner {
                out: Box::new(file),
                seqs,
            })),
        })
    }

    pub fn append(&self, agent: &str, at: DateTime<Utc>, event: HealthEvent) -> io::Result<HealthRecord> {
        let mut inner = self.inner.lock();
        let seq = inner.seqs.entry(agent.to_string()).or_insert(0);
        *seq += 1;
        let record = HealthRecord {
            agent: agent.to_string(),
            seq: *seq,
            at,
            event,
        };
        let mut line = serde_json::to_string(&record).map_err(io::Error::other)?;
        line.push('\n');
        inner.out.write_all(line.as_bytes())?;
        inner.out.flush()?;
        Ok(record)
    }
}

/// Parses a health log, skipping lines that are not records.
pub fn read_health_log(text: &str) -> Vec<HealthRecord> {
    text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect()
}

/// A clonable in-memory sink, for tests and embedding.
#[derive(Clone, Default)]
pub struct SharedBuffer(pub Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn contents(&self) -> String {
        String::from_utf8_lossy(&self.0.lock()).into_owned()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
