//! Two-sample homogeneity tests on count vectors.
//!
//! The chi-squared variant merges every bin whose smaller expected count is
//! below `min_expected` into a single "other" bin and uses
//! `df = surviving bins - 1`; with `df = 0` the samples are declared the same.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Hypergeometric};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestKind {
    ChiSquared,
    /// Monte Carlo permutation test of the chi-squared statistic.
    Permutation { n_perm: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub test: TestKind,
    pub min_expected: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            test: TestKind::ChiSquared,
            min_expected: 5.0,
        }
    }
}

impl TestConfig {
    pub fn chi_squared(alpha: f64) -> Self {
        TestConfig {
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Params(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if let TestKind::Permutation { n_perm, .. } = self.test {
            if n_perm < 100 {
                return Err(Error::Params(format!("permutation test needs n_perm >= 100, got {n_perm}")));
            }
        }
        if !(self.min_expected >= 0.0) {
            return Err(Error::Params("min_expected must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Same,
    Different,
}

/// Pearson statistic of a 2 x k table given as two aligned rows. Columns with
/// zero total are ignored.
pub fn chi2_statistic<F: Scalar>(a: &[u64], b: &[u64]) -> F {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = F::from_count(na + nb);
    if na == 0 || nb == 0 {
        return F::zero();
    }
    let (fa, fb) = (F::from_count(na), F::from_count(nb));
    let mut stat = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let col = x + y;
        if col == 0 {
            continue;
        }
        let col = F::from_count(col);
        let ea = fa * col / n;
        let eb = fb * col / n;
        let dx = F::from_count(x) - ea;
        let dy = F::from_count(y) - eb;
        stat = stat + dx * dx / ea + dy * dy / eb;
    }
    stat
}

/// Merges low-expectation bins into one trailing "other" bin.
pub fn merge_sparse_bins(a: &[u64], b: &[u64], min_expected: f64) -> (Vec<u64>, Vec<u64>) {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    let small = na.min(nb) as f64;
    let (mut ka, mut kb) = (Vec::new(), Vec::new());
    let (mut oa, mut ob) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        let col = x + y;
        if col == 0 {
            continue;
        }
        if small * col as f64 / n < min_expected {
            oa += x;
            ob += y;
        } else {
            ka.push(x);
            kb.push(y);
        }
    }
    if oa + ob > 0 {
        ka.push(oa);
        kb.push(ob);
    }
    (ka, kb)
}

/// Decides whether two count vectors over a shared index come from the same
/// distribution. Symmetric in its arguments.
pub fn homogeneity_test(a: &[u64], b: &[u64], cfg: &TestConfig) -> Result<Verdict> {
    cfg.validate()?;
    if a.len() != b.len() {
        return Err(Error::Params("count vectors must share an index".into()));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 && nb == 0 {
        return Err(Error::NoData("both samples are empty".into()));
    }
    if na == 0 || nb == 0 {
        // Nothing to compare against.
        return Ok(Verdict::Same);
    }
    match cfg.test {
        TestKind::ChiSquared => {
            let (ka, kb) = merge_sparse_bins(a, b, cfg.min_expected);
            let df = ka.len().saturating_sub(1);
            if df == 0 {
                return Ok(Verdict::Same);
            }
            let stat: f64 = chi2_statistic(&ka, &kb);
            let crit = chi2_critical(df, cfg.alpha);
            Ok(if stat > crit { Verdict::Different } else { Verdict::Same })
        }
        TestKind::Permutation { n_perm, seed } => {
            let p = permutation_p_value(a, b, n_perm, seed);
            Ok(if p <= cfg.alpha { Verdict::Different } else { Verdict::Same })
        }
    }
}

/// Upper `alpha` quantile of the chi-squared distribution with `df` degrees of freedom.
pub fn chi2_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("df >= 1")
        .inverse_cdf(1.0 - alpha)
}

/// Upper tail probability of the chi-squared distribution.
pub fn chi2_sf(stat: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64).expect("df >= 1").sf(stat)
}

/// Permutation p-value: the pooled sample is split at random into groups of the
/// original sizes (multivariate hypergeometric draw) and the statistic recomputed.
pub fn permutation_p_value(a: &[u64], b: &[u64], n_perm: usize, seed: u64) -> f64 {
    // Order the pair canonically so the result is symmetric in (a, b).
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let observed: f64 = chi2_statistic(a, b);
    let na: u64 = a.iter().sum();
    let cols: Vec<u64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let total: u64 = cols.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pa = vec![0u64; cols.len()];
    let mut pb = vec![0u64; cols.len()];
    let mut extreme = 0usize;
    for _ in 0..n_perm {
        let mut remaining_pop = total;
        let mut remaining_draw = na;
        for (j, &c) in cols.iter().enumerate() {
            let x = if remaining_draw == 0 || c == 0 {
                0
            } else if c == remaining_pop {
                remaining_draw
            } else {
                Hypergeometric::new(remaining_pop, c, remaining_draw)
                    .expect("valid hypergeometric")
                    .sample(&mut rng)
            };
            pa[j] = x;
            pb[j] = c - x;
            remaining_pop -= c;
            remaining_draw -= x;
        }
        let s: f64 = chi2_statistic(&pa, &pb);
        if s >= observed - 1e-9 {
            extreme += 1;
        }
    }
    (1 + extreme) as f64 / (1 + n_perm) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn separated_samples_differ() {
        let cfg = TestConfig::chi_squared(0.05);
        assert_eq!(homogeneity_test(&[100, 0], &[0, 100], &cfg).unwrap(), Verdict::Different);
        assert_relative_eq!(chi2_statistic::<f64>(&[100, 0], &[0, 100]), 200.0);
    }

    #[test]
    fn close_samples_same() {
        let cfg = TestConfig::chi_squared(0.05);
        // 2/11 + 2/9 by hand.
        assert_relative_eq!(chi2_statistic::<f64>(&[10, 10], &[12, 8]), 2.0 / 11.0 + 2.0 / 9.0, epsilon = 1e-12);
        assert_eq!(homogeneity_test(&[10, 10], &[12, 8], &cfg).unwrap(), Verdict::Same);
    }

    #[test]
    fn identical_vectors_same() {
        let cfg = TestConfig::chi_squared(0.05);
        assert_eq!(homogeneity_test(&[7, 3, 9], &[7, 3, 9], &cfg).unwrap(), Verdict::Same);
    }

    #[test]
    fn critical_value_df1() {
        assert_relative_eq!(chi2_critical(1, 0.05), 3.841458820694124, epsilon = 1e-6);
    }

    #[test]
    fn empty_samples_error() {
        let cfg = TestConfig::chi_squared(0.05);
        assert!(homogeneity_test(&[0, 0], &[0, 0], &cfg).is_err());
    }

    #[test]
    fn sparse_bins_merge_to_df_zero() {
        // Every bin has an expected count below 5 in the smaller sample.
        let (a, b) = merge_sparse_bins(&[20, 1, 0], &[3, 0, 1], 5.0);
        assert_eq!(a.len(), 1);
        assert_eq!((a.iter().sum::<u64>(), b.iter().sum::<u64>()), (21, 4));
        let cfg = TestConfig::chi_squared(0.05);
        assert_eq!(homogeneity_test(&[3, 0], &[50, 2], &cfg).unwrap(), Verdict::Same);
    }

    #[test]
    fn invalid_config() {
        let mut cfg = TestConfig::chi_squared(1.5);
        assert!(homogeneity_test(&[1], &[1], &cfg).is_err());
        cfg.alpha = 0.05;
        cfg.test = TestKind::Permutation { n_perm: 10, seed: 0 };
        assert!(homogeneity_test(&[1], &[1], &cfg).is_err());
    }

    #[test]
    fn permutation_agrees_on_clear_cases() {
        let cfg = TestConfig {
            alpha: 0.01,
            test: TestKind::Permutation { n_perm: 500, seed: 3 },
            min_expected: 5.0,
        };
        assert_eq!(homogeneity_test(&[100, 0], &[0, 100], &cfg).unwrap(), Verdict::Different);
        assert_eq!(homogeneity_test(&[10, 10], &[12, 8], &cfg).unwrap(), Verdict::Same);
    }

    proptest! {
        #[test]
        fn symmetric(a in proptest::collection::vec(0u64..50, 1..6), seed in 0u64..1000) {
            let b: Vec<u64> = a.iter().enumerate().map(|(i, x)| (x * 3 + i as u64 * 7 + seed) % 40).collect();
            prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
            let cfg = TestConfig::chi_squared(0.05);
            prop_assert_eq!(homogeneity_test(&a, &b, &cfg).unwrap(), homogeneity_test(&b, &a, &cfg).unwrap());
            let perm = TestConfig { test: TestKind::Permutation { n_perm: 100, seed }, ..cfg };
            prop_assert_eq!(homogeneity_test(&a, &b, &perm).unwrap(), homogeneity_test(&b, &a, &perm).unwrap());
        }
    }
}
