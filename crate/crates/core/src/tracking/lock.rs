use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StoreError};
use crate::store;

pub const DEFAULT_LOCK_STALENESS_MINUTES: i64 = 30;

/// Contents of a project's `run.lock`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLock {
    pub project_id: String,
    pub run_id: String,
    pub acquired_at: DateTime<Utc>,
    pub pid: u32,
}

/// Held lock; the file is removed on drop.
#[derive(Debug)]
pub struct RunLockGuard {
    path: PathBuf,
    lock: RunLock,
}

impl RunLockGuard {
    /// Take the project's run lock. A lock older than `staleness` is assumed
    /// to belong to a crashed run and is replaced.
    pub fn acquire(path: &Path, lock: RunLock, staleness: Duration) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| StoreError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    f.write_all(&store::to_json_bytes(&lock))
                        .and_then(|_| f.sync_all())
                        .map_err(|source| StoreError::Io {
                            path: path.to_path_buf(),
                            source,
                        })?;
                    return Ok(Self {
                        path: path.to_path_buf(),
                        lock,
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let held: Option<RunLock> = store::read_json(path).ok().flatten();
                    let stale = match &held {
                        Some(h) => lock.acquired_at - h.acquired_at >= staleness,
                        // unreadable lock files are leftovers of an interrupted write
                        None => true,
                    };
                    if !stale {
                        return Err(Error::Busy(lock.project_id.clone()));
                    }
                    tracing::warn!(project = %lock.project_id, held = ?held, "replacing stale run lock");
                    let _ = fs::remove_file(path);
                }
                Err(source) => {
                    return Err(StoreError::Io {
                        path: path.to_path_buf(),
                        source,
                    }
                    .into())
                }
            }
        }
        Err(Error::Busy(lock.project_id))
    }

    pub fn lock(&self) -> &RunLock {
        &self.lock
    }

    pub fn is_held(path: &Path, now: DateTime<Utc>, staleness: Duration) -> bool {
        match store::read_json::<RunLock>(path) {
            Ok(Some(h)) => now - h.acquired_at < staleness,
            _ => false,
        }
    }
}

impl Drop for RunLockGuard {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(&self.path) {
            tracing::warn!(path = %self.path.display(), error = %e, "could not release run lock");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lock(at: DateTime<Utc>) -> RunLock {
        RunLock {
            project_id: "p".into(),
            run_id: "run-0001".into(),
            acquired_at: at,
            pid: 1,
        }
    }

    #[test]
    fn exclusive_until_dropped_or_stale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p/run.lock");
        let t0 = Utc::now();
        let stale = Duration::minutes(30);
        let g = RunLockGuard::acquire(&path, lock(t0), stale).unwrap();
        assert!(matches!(
            RunLockGuard::acquire(&path, lock(t0 + Duration::minutes(5)), stale),
            Err(Error::Busy(_))
        ));
        assert!(RunLockGuard::is_held(&path, t0, stale));
        drop(g);
        assert!(!path.exists());

        let g = RunLockGuard::acquire(&path, lock(t0), stale).unwrap();
        std::mem::forget(g);
        let replaced = RunLockGuard::acquire(&path, lock(t0 + Duration::minutes(31)), stale).unwrap();
        assert_eq!(replaced.lock().acquired_at, t0 + Duration::minutes(31));
    }
}
