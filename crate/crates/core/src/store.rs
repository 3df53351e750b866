//! On-disk layout and file primitives.
//!
//! Every write goes to a temp file in the destination directory and is
//! renamed into place, so readers see either the old or the new file.
//! Append-only logs are rewritten the same way.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::StoreError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory serialization");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    write_atomic(path, &to_json_bytes(value))
}

/// `Ok(None)` when the file does not exist.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, StoreError> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Json {
                path: path.to_path_buf(),
                source,
            }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| StoreError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// Append records to a JSON-lines file via whole-file replace.
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    if records.is_empty() {
        return Ok(());
    }
    let mut bytes = read_bytes_or_empty(path)?;
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        bytes.push(b'\n');
    }
    for record in records {
        bytes.extend(serde_json::to_vec(record).expect("in-memory serialization"));
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, StoreError> {
    Ok(String::from_utf8_lossy(&read_bytes_or_empty(path)?)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

pub fn append_lines(path: &Path, lines: &[String]) -> Result<(), StoreError> {
    if lines.is_empty() {
        return Ok(());
    }
    let mut bytes = read_bytes_or_empty(path)?;
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        bytes.push(b'\n');
    }
    for line in lines {
        bytes.extend(line.as_bytes());
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

fn read_bytes_or_empty(path: &Path) -> Result<Vec<u8>, StoreError> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Paths under the data directory.
#[derive(Debug, Clone)]
pub struct DataLayout {
    root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn projects_dir(&self) -> PathBuf {
        self.root.join("projects")
    }

    pub fn project_dir(&self, project_id: &str) -> PathBuf {
        self.projects_dir().join(project_id)
    }

    pub fn project_record(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("project.json")
    }

    /// Snapshots of the project's primary source live directly under
    /// `snapshots/`; any additional source gets its own subdirectory.
    pub fn snapshots_dir(&self, project_id: &str, source_dir: Option<&str>) -> PathBuf {
        let base = self.project_dir(project_id).join("snapshots");
        match source_dir {
            Some(s) => base.join(s),
            None => base,
        }
    }

    pub fn papers(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("papers.json")
    }

    pub fn questions(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("questions.json")
    }

    pub fn state(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("state.json")
    }

    pub fn suggestions(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("suggestions.jsonl")
    }

    pub fn seen_hashes(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("seen_hashes.txt")
    }

    pub fn runs_dir(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("runs")
    }

    pub fn run(&self, project_id: &str, run_id: &str) -> PathBuf {
        self.runs_dir(project_id).join(format!("{run_id}.json"))
    }

    pub fn answers(&self, project_id: &str, question_id: &str) -> PathBuf {
        self.project_dir(project_id)
            .join("answers")
            .join(format!("{question_id}.jsonl"))
    }

    pub fn run_lock(&self, project_id: &str) -> PathBuf {
        self.project_dir(project_id).join("run.lock")
    }

    pub fn scheduler(&self) -> PathBuf {
        self.root.join("scheduler.json")
    }

    pub fn notifications_log(&self) -> PathBuf {
        self.root.join("notifications.log")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Rec {
        n: u32,
    }

    #[test]
    fn jsonl_append_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.jsonl");
        assert!(read_jsonl::<Rec>(&path).unwrap().is_empty());
        append_jsonl(&path, &[Rec { n: 1 }]).unwrap();
        append_jsonl(&path, &[Rec { n: 2 }, Rec { n: 3 }]).unwrap();
        let all: Vec<Rec> = read_jsonl(&path).unwrap();
        assert_eq!(all, vec![Rec { n: 1 }, Rec { n: 2 }, Rec { n: 3 }]);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_json(&path, &Rec { n: 7 }).unwrap();
        write_json(&path, &Rec { n: 8 }).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("x.json")]);
        assert_eq!(read_json::<Rec>(&path).unwrap(), Some(Rec { n: 8 }));
    }

    #[test]
    fn missing_json_is_none() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(read_json::<Rec>(&dir.path().join("nope.json")).unwrap(), None);
    }

    #[test]
    fn lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seen.txt");
        append_lines(&path, &["aa".into(), "bb".into()]).unwrap();
        append_lines(&path, &["cc".into()]).unwrap();
        assert_eq!(read_lines(&path).unwrap(), vec!["aa", "bb", "cc"]);
    }
}
