//! Append-only JSON-lines event logs, one file per run.
//!
//! Line one is the [`LogHeader`]; every later line is a [`RunEvent`] with
//! sequence numbers counting up from 1. Appends go through
//! [`RunLog::transact`], which validates the new events against the
//! projection before a byte is written.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::Utc;
use thiserror::Error;
use tokio::sync::{broadcast, watch};

use crate::events::{EventPayload, LogHeader, RunEvent, LOG_SCHEMA, LOG_VERSION};
use crate::projection::{ApplyError, Projection};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run id {0:?} must be non-empty and use only letters, digits, '.', '_' and '-'")]
    InvalidRunId(String),
    #[error("run {0} already exists")]
    Exists(String),
    #[error("no run named {0}")]
    NotFound(String),
    #[error("{path}: unreadable header: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("{path}: line {line} (event {seq}) is corrupt: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        seq: u64,
        reason: String,
    },
    #[error("{path}: expected event {expected}, found {found}")]
    Gap { path: PathBuf, expected: u64, found: u64 },
    #[error("{path}: event {seq} does not replay: {source}")]
    Inconsistent {
        path: PathBuf,
        seq: u64,
        #[source]
        source: ApplyError,
    },
    #[error("event refused: {0}")]
    Refused(#[from] ApplyError),
    #[error("{0}")]
    Conflict(String),
}

/// A run id is also a file name, so it is kept to a safe alphabet.
pub fn validate_run_id(run_id: &str) -> Result<(), LogError> {
    let ok = !run_id.is_empty()
        && run_id.len() <= 128
        && !run_id.starts_with('.')
        && run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(LogError::InvalidRunId(run_id.into()))
    }
}

struct Inner {
    file: File,
    projection: Projection,
    events: Vec<RunEvent>,
}

/// One run's log, open for appends.
pub struct RunLog {
    path: PathBuf,
    inner: Mutex<Inner>,
    seq: watch::Sender<u64>,
    feed: broadcast::Sender<RunEvent>,
    driving: AtomicBool,
}

impl std::fmt::Debug for RunLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunLog").field("path", &self.path).finish_non_exhaustive()
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RunLog {
    fn from_parts(path: PathBuf, file: File, projection: Projection, events: Vec<RunEvent>) -> Self {
        let (seq, _) = watch::channel(projection.last_seq);
        let (feed, _) = broadcast::channel(1024);
        Self {
            path,
            inner: Mutex::new(Inner {
                file,
                projection,
                events,
            }),
            seq,
            feed,
            driving: AtomicBool::new(false),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poison| poison.into_inner())
    }

    fn create(path: PathBuf, header: LogHeader) -> Result<Self, LogError> {
        let mut file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == io::ErrorKind::AlreadyExists {
                    LogError::Exists(header.run_id.clone())
                } else {
                    io_err(&path)(e)
                }
            })?;
        let mut line = serde_json::to_string(&header).expect("header serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        file.flush().map_err(io_err(&path))?;
        Ok(Self::from_parts(path, file, Projection::new(header), Vec::new()))
    }

    /// Replay a log from disk. A final line cut off mid-write is dropped and
    /// the file trimmed back to the last complete event.
    fn load(path: PathBuf) -> Result<Self, LogError> {
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete_len < bytes.len() {
            tracing::warn!(path = %path.display(), dropped = bytes.len() - complete_len, "dropping torn final line");
        }
        let text = String::from_utf8_lossy(&bytes[..complete_len]);
        let mut lines = text.lines();
        let header_line = lines.next().ok_or_else(|| LogError::Header {
            path: path.clone(),
            reason: "file has no complete header line".into(),
        })?;
        let header: LogHeader = serde_json::from_str(header_line).map_err(|e| LogError::Header {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if header.schema != LOG_SCHEMA || header.version != LOG_VERSION {
            return Err(LogError::Header {
                path,
                reason: format!("unsupported log format {} v{}", header.schema, header.version),
            });
        }
        let mut projection = Projection::new(header);
        let mut events = Vec::new();
        for (index, line) in lines.enumerate() {
            let expected = projection.last_seq + 1;
            let event: RunEvent = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
                path: path.clone(),
                line: index + 2,
                seq: expected,
                reason: e.to_string(),
            })?;
            if event.seq != expected {
                return Err(LogError::Gap {
                    path,
                    expected,
                    found: event.seq,
                });
            }
            projection.apply(&event).map_err(|source| LogError::Inconsistent {
                path: path.clone(),
                seq: event.seq,
                source,
            })?;
            events.push(event);
        }
        let file = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
        if complete_len < bytes.len() {
            file.set_len(complete_len as u64).map_err(io_err(&path))?;
        }
        drop(file);
        let file = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        Ok(Self::from_parts(path, file, projection, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn run_id(&self) -> String {
        self.lock().projection.header.run_id.clone()
    }

    pub fn projection(&self) -> Projection {
        self.lock().projection.clone()
    }

    pub fn events(&self) -> Vec<RunEvent> {
        self.lock().events.clone()
    }

    /// Events so far plus a feed of everything appended afterwards, with no
    /// event missed or repeated between the two.
    pub fn subscribe(&self) -> (Vec<RunEvent>, broadcast::Receiver<RunEvent>) {
        let inner = self.lock();
        (inner.events.clone(), self.feed.subscribe())
    }

    /// Wakes whenever the last sequence number changes.
    pub fn watch(&self) -> watch::Receiver<u64> {
        self.seq.subscribe()
    }

    /// Build events from the current projection and append them. The events
    /// are checked against a copy of the projection first, so a refused
    /// batch leaves both the file and the state untouched.
    pub fn transact<F>(&self, build: F) -> Result<Vec<RunEvent>, LogError>
    where
        F: FnOnce(&Projection) -> Result<Vec<EventPayload>, LogError>,
    {
        let mut inner = self.lock();
        let payloads = build(&inner.projection)?;
        if payloads.is_empty() {
            return Ok(Vec::new());
        }
        let mut next = inner.projection.clone();
        let run_id = next.header.run_id.clone();
        let mut fresh = Vec::with_capacity(payloads.len());
        let mut buf = String::new();
        for payload in payloads {
            let event = RunEvent {
                run_id: run_id.clone(),
                seq: next.last_seq + 1,
                timestamp: Utc::now(),
                payload,
            };
            next.apply(&event)?;
            buf.push_str(&serde_json::to_string(&event).expect("events serialize"));
            buf.push('\n');
            fresh.push(event);
        }
        inner.file.write_all(buf.as_bytes()).map_err(io_err(&self.path))?;
        inner.file.flush().map_err(io_err(&self.path))?;
        inner.projection = next;
        inner.events.extend(fresh.iter().cloned());
        self.seq.send_replace(inner.projection.last_seq);
        for event in &fresh {
            let _ = self.feed.send(event.clone());
        }
        Ok(fresh)
    }

    /// Append only if nothing was appended since `last_seq`. Returns false
    /// when another writer got there first.
    pub fn append_if(&self, last_seq: u64, payloads: Vec<EventPayload>) -> Result<bool, LogError> {
        let mut stale = false;
        self.transact(|p| {
            if p.last_seq != last_seq {
                stale = true;
                return Ok(Vec::new());
            }
            Ok(payloads)
        })?;
        Ok(!stale)
    }

    /// Claim the run for one driver. The guard releases it on drop.
    pub fn claim(self: &Arc<Self>) -> Option<DriveGuard> {
        self.driving
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| DriveGuard(Arc::clone(self)))
    }
}

pub struct DriveGuard(Arc<RunLog>);

impl Drop for DriveGuard {
    fn drop(&mut self) {
        self.0.driving.store(false, Ordering::Release);
    }
}

/// A directory of run logs. Logs are opened once and shared afterwards, so
/// the engine and the review API see the same state.
#[derive(Debug)]
pub struct LogStore {
    dir: PathBuf,
    live: Mutex<HashMap<String, Arc<RunLog>>>,
}

impl LogStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LogError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self {
            dir,
            live: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, run_id: &str) -> PathBuf {
        self.dir.join(format!("{run_id}.jsonl"))
    }

    fn live(&self) -> MutexGuard<'_, HashMap<String, Arc<RunLog>>> {
        self.live.lock().unwrap_or_else(|poison| poison.into_inner())
    }

    pub fn create(&self, header: LogHeader) -> Result<Arc<RunLog>, LogError> {
        validate_run_id(&header.run_id)?;
        let mut live = self.live();
        if live.contains_key(&header.run_id) {
            return Err(LogError::Exists(header.run_id));
        }
        let run_id = header.run_id.clone();
        let log = Arc::new(RunLog::create(self.path(&run_id), header)?);
        live.insert(run_id, Arc::clone(&log));
        Ok(log)
    }

    pub fn get(&self, run_id: &str) -> Result<Arc<RunLog>, LogError> {
        validate_run_id(run_id)?;
        let mut live = self.live();
        if let Some(log) = live.get(run_id) {
            return Ok(Arc::clone(log));
        }
        let path = self.path(run_id);
        if !path.exists() {
            return Err(LogError::NotFound(run_id.into()));
        }
        let log = Arc::new(RunLog::load(path)?);
        live.insert(run_id.into(), Arc::clone(&log));
        Ok(log)
    }

    /// Ids of every log in the directory, sorted.
    pub fn run_ids(&self) -> Result<Vec<String>, LogError> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.dir).map_err(io_err(&self.dir))? {
            let entry = entry.map_err(io_err(&self.dir))?;
            let name = entry.file_name();
            let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".jsonl")) else {
                continue;
            };
            if validate_run_id(id).is_ok() {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }
}
