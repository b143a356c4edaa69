//! Append-only judgment log: one JSON record per line, synced to disk before acknowledging.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ctl_core::eval::judgment::JudgmentRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("task {task_id:?} already judged by {rater:?}")]
    Duplicate { task_id: String, rater: String },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("corrupt record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct JudgmentStore {
    path: PathBuf,
    file: File,
    records: Vec<JudgmentRecord>,
    keys: HashSet<(String, String)>,
}

impl JudgmentStore {
    /// Opens or creates the log. A final line without a newline is an interrupted write
    /// and is truncated away.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut records = Vec::new();
        let mut keys = HashSet::new();
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&file);
            let mut line = String::new();
            let mut n = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line)?;
                if read == 0 || !line.ends_with('\n') {
                    break;
                }
                n += 1;
                good_len += read as u64;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: JudgmentRecord = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    line: n,
                    message: e.to_string(),
                })?;
                keys.insert((rec.task_id.clone(), rec.rater.clone()));
                records.push(rec);
            }
        }
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            path,
            file,
            records,
            keys,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[JudgmentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, task_id: &str, rater: &str) -> bool {
        self.keys.contains(&(task_id.to_string(), rater.to_string()))
    }

    /// Validates, rejects a repeated (task, rater) pair, then writes and syncs the record.
    pub fn append(&mut self, record: JudgmentRecord) -> Result<(), StoreError> {
        record.validate().map_err(|e| StoreError::Invalid(e.to_string()))?;
        let key = (record.task_id.clone(), record.rater.clone());
        if self.keys.contains(&key) {
            return Err(StoreError::Duplicate {
                task_id: key.0,
                rater: key.1,
            });
        }
        let mut line = serde_json::to_vec(&record).map_err(|e| StoreError::Invalid(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.keys.insert(key);
        self.records.push(record);
        Ok(())
    }
}
