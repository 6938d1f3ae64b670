//! Append-only line-delimited JSON files.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::dialogue::{DialogueTurn, Session};

pub struct JsonlFile {
    path: PathBuf,
    file: File,
}

impl JsonlFile {
    /// Open `path` for appending and return every complete record in it. A
    /// final line without its newline is what a crash mid-write leaves
    /// behind; it is dropped and cut from the file.
    pub fn open<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, JsonlFile), ServiceError> {
        let io = |source| ServiceError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path).map_err(io)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(io)?;
        let complete = buf.iter().rposition(|b| *b == b'\n').map(|i| i + 1).unwrap_or(0);
        if complete < buf.len() {
            tracing::warn!(path = %path.display(), bytes = buf.len() - complete, "discarding truncated final record");
            file.set_len(complete as u64).map_err(io)?;
        }
        let mut records = Vec::new();
        for (i, line) in buf[..complete].split(|b| *b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let record = serde_json::from_slice(line).map_err(|e| ServiceError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(record);
        }
        Ok((
            records,
            JsonlFile {
                path: path.to_path_buf(),
                file,
            },
        ))
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        self.file.write_all(&line).map_err(|source| ServiceError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// One line of the session store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum StoreRecord {
    Session { session: Session },
    Turns { session_id: String, turns: Vec<DialogueTurn> },
}

/// Rebuild sessions from store records, in creation order.
pub fn replay(records: Vec<StoreRecord>) -> Result<Vec<Session>, String> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut by_id = std::collections::HashMap::new();
    for r in records {
        match r {
            StoreRecord::Session { session } => {
                if by_id.insert(session.id.clone(), sessions.len()).is_some() {
                    return Err(format!("session `{}` created twice", session.id));
                }
                sessions.push(session);
            }
            StoreRecord::Turns { session_id, turns } => {
                let i = *by_id
                    .get(&session_id)
                    .ok_or_else(|| format!("turns for unknown session `{session_id}`"))?;
                for t in turns {
                    sessions[i].push_turn(t);
                }
            }
        }
    }
    Ok(sessions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEvent {
    Query,
    Response,
    CitationClick,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionLogEntry {
    pub ts_ms: u64,
    pub session_id: String,
    pub event: LogEvent,
    pub payload: serde_json::Value,
}

/// Read every complete entry of an interaction log.
pub fn read_log(path: &Path) -> Result<Vec<InteractionLogEntry>, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let complete = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
    text[..complete]
        .lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ServiceError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
