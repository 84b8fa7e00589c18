//! Budgets and worker pools for the exhaustive searches.

use crate::error::{Error, Result};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    /// Upper bound on search nodes (witnesses, colorings, subsets) visited.
    pub budget: u64,
    /// Worker threads; `1` runs on the calling thread.
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: DEFAULT_BUDGET,
            workers: 1,
        }
    }
}

impl SearchConfig {
    pub fn with_budget(budget: u64) -> Self {
        SearchConfig {
            budget,
            ..Self::default()
        }
    }

    /// Runs `f` inside a pool of `workers` threads.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        if self.workers <= 1 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
}

/// Counts work against a budget and fails loudly once it is spent.
#[derive(Debug)]
pub struct Meter<'a> {
    what: &'a str,
    limit: u64,
    used: u64,
}

impl<'a> Meter<'a> {
    pub fn new(what: &'a str, limit: u64) -> Self {
        Meter {
            what,
            limit,
            used: 0,
        }
    }

    pub fn tick(&mut self) -> Result<()> {
        self.add(1)
    }

    pub fn add(&mut self, n: u64) -> Result<()> {
        self.used = self.used.saturating_add(n);
        if self.used > self.limit {
            return Err(Error::budget(self.what, self.limit, format!("more than {}", self.limit)));
        }
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}
