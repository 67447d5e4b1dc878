//! On-disk agent state: config, pending submissions and rejected ones.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::AgentConfig;
use super::AgentError;
use crate::model::Submission;

/// Submissions awaiting delivery, oldest first. When backed by a file the
/// queue is rewritten atomically after every change.
#[derive(Debug, Default)]
pub struct SubmissionQueue {
    path: Option<PathBuf>,
    items: VecDeque<Submission>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AgentError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<VecDeque<Submission>, AgentError> {
    if !path.exists() {
        return Ok(VecDeque::new());
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(AgentError::from))
        .collect()
}

impl SubmissionQueue {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, AgentError> {
        Ok(SubmissionQueue {
            items: read_lines(path)?,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn front(&self) -> Option<&Submission> {
        self.items.front()
    }

    pub fn push(&mut self, sub: Submission) -> Result<(), AgentError> {
        self.items.push_back(sub);
        self.persist()
    }

    pub fn pop_front(&mut self) -> Result<Option<Submission>, AgentError> {
        let sub = self.items.pop_front();
        self.persist()?;
        Ok(sub)
    }

    fn persist(&self) -> Result<(), AgentError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut buf = String::new();
        for s in &self.items {
            buf.push_str(&serde_json::to_string(s)?);
            buf.push('\n');
        }
        write_atomic(path, buf.as_bytes())
    }
}

/// The agent's state directory.
#[derive(Debug, Clone)]
pub struct StateDir {
    root: PathBuf,
    profile: PathBuf,
}

impl StateDir {
    pub fn open(root: &Path) -> Result<Self, AgentError> {
        Self::from_profile(&root.join("agent.json"))
    }

    /// State kept beside a profile file: the queue and set-aside
    /// submissions live in the profile's directory.
    pub fn from_profile(profile: &Path) -> Result<Self, AgentError> {
        let root = match profile.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&root)?;
        Ok(StateDir {
            root,
            profile: profile.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn config_path(&self) -> PathBuf {
        self.profile.clone()
    }

    pub fn load_config(&self) -> Result<Option<AgentConfig>, AgentError> {
        let path = self.config_path();
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }

    pub fn save_config(&self, config: &AgentConfig) -> Result<(), AgentError> {
        write_atomic(&self.config_path(), serde_json::to_string_pretty(config)?.as_bytes())
    }

    pub fn queue(&self) -> Result<SubmissionQueue, AgentError> {
        SubmissionQueue::open(&self.root.join("queue.jsonl"))
    }

    /// Keeps a submission the server refused outright.
    pub fn set_aside(&self, sub: &Submission, reason: &str) -> Result<(), AgentError> {
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("rejected.jsonl"))?;
        let line = serde_json::json!({ "reason": reason, "submission": sub });
        writeln!(f, "{line}")?;
        Ok(())
    }
}
