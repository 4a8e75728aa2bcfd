//! Finite probability vectors over configuration keys.

use std::collections::BTreeMap;

use crate::config::ConfigKey;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability vector over a sorted finite support.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector<F: Scalar> {
    pub support: Vec<ConfigKey>,
    pub probs: Vec<F>,
}

impl<F: Scalar> ProbVector<F> {
    /// Normalizes a count map; zero-count entries are dropped.
    pub fn from_counts(counts: &BTreeMap<ConfigKey, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::NoData("all counts are zero".into()));
        }
        let denom = F::from_count(total);
        let (support, probs) = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k.clone(), F::from_count(c) / denom))
            .unzip();
        Ok(ProbVector { support, probs })
    }

    pub fn point_mass(key: ConfigKey) -> Self {
        ProbVector {
            support: vec![key],
            probs: vec![F::one()],
        }
    }

    pub fn get(&self, key: &ConfigKey) -> F {
        self.support
            .binary_search(key)
            .map(|i| self.probs[i])
            .unwrap_or_else(|_| F::zero())
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConfigKey, F)> {
        self.support.iter().zip(self.probs.iter().copied())
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> F {
        -self.probs.iter().map(|p| p.xlog2x()).sum::<F>()
    }

    /// Key with the highest probability; ties go to the smaller key.
    pub fn argmax(&self) -> Option<&ConfigKey> {
        let mut best: Option<(usize, F)> = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((i, p));
            }
        }
        best.map(|(i, _)| &self.support[i])
    }

    /// Largest componentwise difference over the union of supports.
    pub fn max_abs_diff(&self, other: &Self) -> F {
        let mut worst = F::zero();
        for (k, p) in self.iter() {
            worst = worst.max((p - other.get(k)).abs());
        }
        for (k, q) in other.iter() {
            worst = worst.max((q - self.get(k)).abs());
        }
        worst
    }
}
