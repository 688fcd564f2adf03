use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("cache capacity must be positive")]
    ZeroCapacity,
    #[error("every cached space is pinned; cannot admit `{0}`")]
    AllPinned(String),
}

/// Recency-ordered cache of loaded spaces with optional pinning.
///
/// Pinned entries count toward capacity but are never chosen for eviction.
#[derive(Debug)]
pub struct SpaceCache<T> {
    capacity: usize,
    pinned: BTreeSet<String>,
    /// Least recently used first.
    order: VecDeque<String>,
    entries: HashMap<String, Arc<T>>,
    loads: u64,
    evictions: Vec<String>,
}

impl<T> SpaceCache<T> {
    pub fn new(capacity: usize) -> Result<Self, CacheError> {
        if capacity == 0 {
            return Err(CacheError::ZeroCapacity);
        }
        Ok(SpaceCache {
            capacity,
            pinned: BTreeSet::new(),
            order: VecDeque::new(),
            entries: HashMap::new(),
            loads: 0,
            evictions: Vec::new(),
        })
    }

    pub fn pin(&mut self, app_id: impl Into<String>) {
        self.pinned.insert(app_id.into());
    }

    pub fn is_pinned(&self, app_id: &str) -> bool {
        self.pinned.contains(app_id)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, app_id: &str) -> bool {
        self.entries.contains_key(app_id)
    }

    /// Number of spaces admitted so far (cache misses that were filled).
    pub fn loads(&self) -> u64 {
        self.loads
    }

    /// Evicted app ids, oldest first.
    pub fn evictions(&self) -> &[String] {
        &self.evictions
    }

    /// App ids from least to most recently used.
    pub fn recency(&self) -> Vec<&str> {
        self.order.iter().map(String::as_str).collect()
    }

    fn touch(&mut self, app_id: &str) {
        if let Some(pos) = self.order.iter().position(|a| a == app_id) {
            let id = self.order.remove(pos).expect("position is valid");
            self.order.push_back(id);
        }
    }

    /// Returns the cached entry and marks it most recently used.
    pub fn get(&mut self, app_id: &str) -> Option<Arc<T>> {
        let hit = self.entries.get(app_id).cloned();
        if hit.is_some() {
            self.touch(app_id);
        }
        hit
    }

    /// Reads without affecting recency.
    pub fn peek(&self, app_id: &str) -> Option<&Arc<T>> {
        self.entries.get(app_id)
    }

    /// Inserts (or replaces) an entry as most recently used, evicting the
    /// least recently used unpinned entry when full.
    pub fn insert(&mut self, app_id: &str, value: Arc<T>) -> Result<Option<String>, CacheError> {
        if self.entries.contains_key(app_id) {
            self.entries.insert(app_id.to_owned(), value);
            self.touch(app_id);
            return Ok(None);
        }
        let mut evicted = None;
        if self.entries.len() >= self.capacity {
            let victim = self
                .order
                .iter()
                .position(|a| !self.pinned.contains(a))
                .ok_or_else(|| CacheError::AllPinned(app_id.to_owned()))?;
            let id = self.order.remove(victim).expect("position is valid");
            self.entries.remove(&id);
            self.evictions.push(id.clone());
            evicted = Some(id);
        }
        self.entries.insert(app_id.to_owned(), value);
        self.order.push_back(app_id.to_owned());
        self.loads += 1;
        Ok(evicted)
    }
}
