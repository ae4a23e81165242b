//! Durable storage: append-only canonical-JSON logs and atomic snapshots.
//!
//! Every append is flushed and fsync'd before returning, so callers may
//! acknowledge a request once `append` succeeds. A torn final line (crash
//! mid-write) is ignored on load.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::canonical::{from_canonical, to_canonical};

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt entry in {path} at line {line}")]
    Corrupt { path: PathBuf, line: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_path_buf(), source }
}

/// One event per line. `None` path keeps everything in memory only.
#[derive(Debug)]
pub struct EventLog<T> {
    path: Option<PathBuf>,
    file: Option<File>,
    _marker: PhantomData<T>,
}

impl<T: Serialize + DeserializeOwned> EventLog<T> {
    pub fn memory() -> Self {
        Self { path: None, file: None, _marker: PhantomData }
    }

    /// Open (creating if needed) and return the existing events.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<T>), StorageError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let events = Self::read_all(&path)?;
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        Ok((Self { path: Some(path), file: Some(file), _marker: PhantomData }, events))
    }

    fn read_all(path: &Path) -> Result<Vec<T>, StorageError> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(path)(e)),
        };
        let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(io_err(path))?;
        let mut events = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.is_empty() {
                continue;
            }
            match from_canonical(line.as_bytes()) {
                Ok(e) => events.push(e),
                // Torn tail from a crash during the last append.
                Err(_) if i + 1 == lines.len() => break,
                Err(_) => return Err(StorageError::Corrupt { path: path.to_path_buf(), line: i + 1 }),
            }
        }
        Ok(events)
    }

    pub fn append(&mut self, event: &T) -> Result<(), StorageError> {
        let (Some(file), Some(path)) = (self.file.as_mut(), self.path.as_ref()) else { return Ok(()) };
        let mut line = to_canonical(event);
        line.push(b'\n');
        file.write_all(&line).map_err(io_err(path))?;
        file.sync_data().map_err(io_err(path))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

/// Replace `path` atomically with the canonical encoding of `value`.
pub fn write_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StorageError> {
    write_bytes_atomic(path, &to_canonical(value))
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<(), StorageError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        // Persist the rename itself.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, StorageError> {
    match fs::read(path) {
        Ok(bytes) => from_canonical(&bytes)
            .map(Some)
            .map_err(|_| StorageError::Corrupt { path: path.to_path_buf(), line: 1 }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_roundtrip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        {
            let (mut log, existing) = EventLog::<Vec<u32>>::open(&path).unwrap();
            assert!(existing.is_empty());
            log.append(&vec![1, 2]).unwrap();
            log.append(&vec![3]).unwrap();
        }
        let mut raw = fs::OpenOptions::new().append(true).open(&path).unwrap();
        raw.write_all(b"[4,").unwrap();
        let (_, events) = EventLog::<Vec<u32>>::open(&path).unwrap();
        assert_eq!(events, vec![vec![1, 2], vec![3]]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        fs::write(&path, b"[1]\nnot json\n[2]\n").unwrap();
        assert!(matches!(EventLog::<Vec<u32>>::open(&path), Err(StorageError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn atomic_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        assert_eq!(read_json::<Vec<u8>>(&path).unwrap(), None);
        write_atomic(&path, &vec![1u8, 2]).unwrap();
        write_atomic(&path, &vec![3u8]).unwrap();
        assert_eq!(read_json::<Vec<u8>>(&path).unwrap(), Some(vec![3]));
        assert!(!path.with_extension("tmp").exists());
    }
}
