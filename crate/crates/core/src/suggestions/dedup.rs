use std::collections::BTreeSet;
use std::path::Path;

use crate::error::StoreError;
use crate::store;

/// Content hashes of every suggestion delivered for a project.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeenSet {
    hashes: BTreeSet<String>,
}

impl SeenSet {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Ok(Self {
            hashes: store::read_lines(path)?
                .into_iter()
                .map(|l| l.trim().to_owned())
                .filter(|l| !l.is_empty())
                .collect(),
        })
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.hashes.contains(hash)
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    /// Keep items whose hash is neither seen nor repeated earlier in the
    /// batch. Does not record anything.
    pub fn filter<T>(&self, batch: Vec<T>, hash_of: impl Fn(&T) -> &str) -> Vec<T> {
        let mut in_batch = BTreeSet::new();
        batch
            .into_iter()
            .filter(|item| {
                let h = hash_of(item);
                !self.contains(h) && in_batch.insert(h.to_owned())
            })
            .collect()
    }

    /// Record delivered hashes in memory and append the new ones to `path`.
    pub fn record_delivered(&mut self, path: &Path, hashes: &[String]) -> Result<(), StoreError> {
        let fresh: Vec<String> = hashes
            .iter()
            .filter(|h| self.hashes.insert((*h).clone()))
            .cloned()
            .collect();
        if fresh.is_empty() {
            return Ok(());
        }
        store::append_lines(path, &fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_then_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seen.txt");
        let mut seen = SeenSet::load(&path).unwrap();
        let batch = vec!["a".to_string(), "b".into(), "a".into()];
        let kept = seen.filter(batch.clone(), |s| s.as_str());
        assert_eq!(kept, vec!["a", "b"]);
        assert!(seen.is_empty(), "filtering must not mark anything seen");
        seen.record_delivered(&path, &kept).unwrap();
        let reloaded = SeenSet::load(&path).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert!(reloaded.filter(batch, |s| s.as_str()).is_empty());
        seen.record_delivered(&path, &["a".to_string()]).unwrap();
        assert_eq!(store::read_lines(&path).unwrap().len(), 2);
    }
}
