use std::collections::BTreeMap;

use crate::{CoreError, Result};

type Factory<T> = fn() -> Box<T>;

/// Name → constructor table for interchangeable strategies.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: Factory<T>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        self.entries.get(name).map(|f| f()).ok_or_else(|| {
            CoreError::Config(format!(
                "unknown {} `{name}`; available: {}",
                self.kind,
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}
