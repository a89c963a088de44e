//! One append-only JSON-lines log per record family.
//!
//! Each line is `{"id":"<hex>","rev":<n>,"body":{...},"crc32":"<8 hex>"}`.
//! The body is written in canonical form (object keys sorted, compact) and
//! the checksum is CRC-32 (IEEE) of the UTF-8 bytes of
//! `"<id>:<rev>:<canonical body>"`. Later lines win for the same id.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::id::Id;

pub trait Record: Serialize + DeserializeOwned + Clone + 'static {
    /// File stem of the table (`<root>/<TABLE>.jsonl`).
    const TABLE: &'static str;

    fn record_id(&self) -> Id;
}

#[derive(Serialize, Deserialize)]
struct Line {
    id: Id,
    rev: u64,
    body: serde_json::Value,
    crc32: String,
}

fn checksum(id: Id, rev: u64, body: &str) -> String {
    let mut h = crc32fast::Hasher::new();
    h.update(format!("{id}:{rev}:").as_bytes());
    h.update(body.as_bytes());
    format!("{:08x}", h.finalize())
}

pub(crate) fn encode_line<T: Serialize>(id: Id, rev: u64, record: &T) -> Result<String, StoreError> {
    let body = serde_json::to_value(record).map_err(|e| StoreError::Serialization(e.to_string()))?;
    let body = serde_json::to_string(&body).map_err(|e| StoreError::Serialization(e.to_string()))?;
    let crc = checksum(id, rev, &body);
    Ok(format!(
        "{{\"id\":\"{id}\",\"rev\":{rev},\"body\":{body},\"crc32\":\"{crc}\"}}\n"
    ))
}

struct Row<T> {
    rev: u64,
    body: T,
}

pub struct Table<T> {
    path: PathBuf,
    file: File,
    rows: IndexMap<Id, Row<T>>,
    lines: u64,
    _marker: PhantomData<T>,
}

impl<T: Record> Table<T> {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let path = root.join(format!("{}.jsonl", T::TABLE));
        let corrupt = |line: usize, reason: String| StoreError::CorruptStore {
            table: T::TABLE.to_string(),
            line,
            reason,
        };

        let mut text = match fs::read(&path) {
            Ok(bytes) => String::from_utf8(bytes).map_err(|e| corrupt(0, e.to_string()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(StoreError::Io(e.to_string())),
        };

        // A final line without its newline is a write torn by a crash: it
        // was never acknowledged, so drop it.
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            log::warn!(
                "{}: discarding torn trailing write ({} bytes)",
                path.display(),
                text.len() - keep
            );
            text.truncate(keep);
            let f = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(|e| StoreError::Io(e.to_string()))?;
            f.set_len(keep as u64).map_err(|e| StoreError::Io(e.to_string()))?;
            f.sync_all().map_err(|e| StoreError::Io(e.to_string()))?;
        }

        let mut rows: IndexMap<Id, Row<T>> = IndexMap::new();
        let mut lines = 0u64;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line: Line = serde_json::from_str(raw).map_err(|e| corrupt(line_no, e.to_string()))?;
            let body_text = serde_json::to_string(&line.body).map_err(|e| corrupt(line_no, e.to_string()))?;
            if checksum(line.id, line.rev, &body_text) != line.crc32 {
                return Err(corrupt(line_no, "checksum mismatch".into()));
            }
            let body: T = serde_json::from_value(line.body).map_err(|e| corrupt(line_no, e.to_string()))?;
            if body.record_id() != line.id {
                return Err(corrupt(line_no, "body id differs from line id".into()));
            }
            match rows.get_mut(&line.id) {
                Some(row) => {
                    if line.rev <= row.rev {
                        return Err(corrupt(line_no, format!("revision {} does not advance", line.rev)));
                    }
                    *row = Row { rev: line.rev, body };
                }
                None => {
                    rows.insert(line.id, Row { rev: line.rev, body });
                }
            }
            lines += 1;
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::Io(e.to_string()))?;
        Ok(Self {
            path,
            file,
            rows,
            lines,
            _marker: PhantomData,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of lines in the log, superseded revisions included.
    pub fn line_count(&self) -> u64 {
        self.lines
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &Id) -> Option<&T> {
        self.rows.get(id).map(|r| &r.body)
    }

    pub fn rev(&self, id: &Id) -> Option<u64> {
        self.rows.get(id).map(|r| r.rev)
    }

    pub fn contains(&self, id: &Id) -> bool {
        self.rows.contains_key(id)
    }

    /// Records in first-insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.rows.values().map(|r| &r.body)
    }

    /// Appends `records` and syncs the file before returning.
    pub fn append(&mut self, records: Vec<T>) -> Result<(), StoreError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        let mut revs: IndexMap<Id, u64> = IndexMap::new();
        for r in &records {
            let id = r.record_id();
            let prev = revs.get(&id).copied().or_else(|| self.rev(&id)).unwrap_or(0);
            revs.insert(id, prev + 1);
            buf.push_str(&encode_line(id, prev + 1, r)?);
        }
        self.file
            .write_all(buf.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| StoreError::Io(e.to_string()))?;
        self.lines += records.len() as u64;
        for r in records {
            let id = r.record_id();
            let rev = self.rev(&id).unwrap_or(0) + 1;
            match self.rows.get_mut(&id) {
                Some(row) => *row = Row { rev, body: r },
                None => {
                    self.rows.insert(id, Row { rev, body: r });
                }
            }
        }
        Ok(())
    }
}
