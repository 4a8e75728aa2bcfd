//! Plug-in (maximum-likelihood) entropy and mutual information estimators, in bits.
//!
//! All estimators are written as sums of joint entropies so that identities
//! such as the chain rule hold for estimates computed on one shared table.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Entropy of the empirical distribution given by `counts`.
pub fn entropy<F: Scalar>(counts: impl IntoIterator<Item = u64>) -> F {
    let mut total = 0u64;
    let mut acc = F::zero();
    for n in counts {
        if n > 0 {
            total += n;
            acc = acc + F::from_count(n).xlog2x();
        }
    }
    if total == 0 {
        return F::zero();
    }
    let nt = F::from_count(total);
    nt.log2() - acc / nt
}

fn marginal<K: Ord + Clone, T>(joint: &BTreeMap<T, u64>, project: impl Fn(&T) -> K) -> BTreeMap<K, u64> {
    let mut m = BTreeMap::new();
    for (k, &n) in joint {
        *m.entry(project(k)).or_insert(0) += n;
    }
    m
}

fn check_total<T>(joint: &BTreeMap<T, u64>) -> Result<u64> {
    let total: u64 = joint.values().sum();
    if total == 0 {
        return Err(Error::NoData("empty contingency table".into()));
    }
    Ok(total)
}

/// `I[X;Y]` from sparse joint counts.
pub fn mutual_information_sparse<F: Scalar, X: Ord + Clone, Y: Ord + Clone>(joint: &BTreeMap<(X, Y), u64>) -> Result<F> {
    check_total(joint)?;
    let hx: F = entropy(marginal(joint, |(x, _)| x.clone()).into_values());
    let hy: F = entropy(marginal(joint, |(_, y)| y.clone()).into_values());
    let hxy: F = entropy(joint.values().copied());
    Ok((hx + hy - hxy).max(F::zero()))
}

/// `I[X;Y|Z]` from sparse joint counts keyed by `(x, y, z)`.
pub fn conditional_mutual_information_sparse<F: Scalar, X: Ord + Clone, Y: Ord + Clone, Z: Ord + Clone>(
    joint: &BTreeMap<(X, Y, Z), u64>,
) -> Result<F> {
    check_total(joint)?;
    let hxz: F = entropy(marginal(joint, |(x, _, z)| (x.clone(), z.clone())).into_values());
    let hyz: F = entropy(marginal(joint, |(_, y, z)| (y.clone(), z.clone())).into_values());
    let hz: F = entropy(marginal(joint, |(_, _, z)| z.clone()).into_values());
    let hxyz: F = entropy(joint.values().copied());
    Ok((hxz + hyz - hz - hxyz).max(F::zero()))
}

/// `H[X|Y]` from sparse joint counts.
pub fn conditional_entropy_sparse<F: Scalar, X: Ord + Clone, Y: Ord + Clone>(joint: &BTreeMap<(X, Y), u64>) -> Result<F> {
    check_total(joint)?;
    let hy: F = entropy(marginal(joint, |(_, y)| y.clone()).into_values());
    let hxy: F = entropy(joint.values().copied());
    Ok((hxy - hy).max(F::zero()))
}

/// `I[X;Y]` of a dense contingency table indexed `[x][y]`.
pub fn mutual_information<F: Scalar>(table: &[Vec<u64>]) -> Result<F> {
    let joint: BTreeMap<(usize, usize), u64> = table
        .iter()
        .enumerate()
        .flat_map(|(x, row)| row.iter().enumerate().map(move |(y, &n)| ((x, y), n)))
        .filter(|(_, n)| *n > 0)
        .collect();
    mutual_information_sparse(&joint)
}

/// `I[X;Y|Z]` of a dense table indexed `[x][y][z]`.
pub fn conditional_mutual_information<F: Scalar>(table: &[Vec<Vec<u64>>]) -> Result<F> {
    let mut joint: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
    for (x, plane) in table.iter().enumerate() {
        for (y, row) in plane.iter().enumerate() {
            for (z, &n) in row.iter().enumerate() {
                if n > 0 {
                    joint.insert((x, y, z), n);
                }
            }
        }
    }
    conditional_mutual_information_sparse(&joint)
}

/// First-order (Miller-Madow) bias of the plug-in MI for a table with the
/// given numbers of occupied rows and columns.
pub fn mi_bias_bits(rows: usize, cols: usize, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (rows.saturating_sub(1) * cols.saturating_sub(1)) as f64 / (2.0 * total as f64 * std::f64::consts::LN_2)
}
