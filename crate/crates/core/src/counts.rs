//! Observed counts and their profile (histogram of histograms).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Per-symbol observation counts `N_1..N_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsVector {
    counts: Vec<u64>,
    n_total: u64,
}

impl CountsVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let n_total = counts.iter().sum();
        Ok(Self { counts, n_total })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Domain size `k`.
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn profile(&self) -> Profile {
        Profile::from_counts(&self.counts)
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.counts
    }
}

/// Multiplicities `Φ_y = #{i : N_i = y}`; only nonzero multiplicities are stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    entries: BTreeMap<u64, u64>,
    k: u64,
}

impl Profile {
    pub fn from_counts(counts: &[u64]) -> Self {
        let mut entries = BTreeMap::new();
        for &c in counts {
            *entries.entry(c).or_insert(0u64) += 1;
        }
        Self {
            entries,
            k: counts.len() as u64,
        }
    }

    /// `Φ_y`, zero when `y` was never observed.
    pub fn phi(&self, y: u64) -> u64 {
        self.entries.get(&y).copied().unwrap_or(0)
    }

    /// `(y, Φ_y)` pairs in increasing `y`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.entries.iter().map(|(&y, &m)| (y, m))
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn min_count(&self) -> Option<u64> {
        self.entries.keys().next().copied()
    }

    pub fn max_count(&self) -> Option<u64> {
        self.entries.keys().next_back().copied()
    }

    pub fn n_total(&self) -> u64 {
        self.iter().map(|(y, m)| y * m).sum()
    }
}
