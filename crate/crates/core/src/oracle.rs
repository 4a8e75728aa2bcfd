//! Exact cone distributions for the built-in generating rules.
//!
//! The joint law of a set of space-time cells is computed by enumerating the
//! values of the oldest slice the cells depend on (drawn i.i.d. from the
//! initial distribution) together with every noise outcome of the cells
//! computed from it. This is exact for the distribution at the first time the
//! cells fit in the data, and for all times whenever the i.i.d. initial law is
//! invariant under the rule (i.i.d. rules, shifts, noisy shifts with uniform
//! initial law).

use std::collections::{BTreeMap, BTreeSet};

use crate::cone::Offset;
use crate::config::{ConfigKey, Symbol};
use crate::distribution::ProbVector;
use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};
use crate::layout::ConeLayout;
use crate::reconstruct::ORACLE_TOL;
use crate::rules::{LocalRule, RuleKind};

/// Largest number of enumeration leaves attempted.
pub const ENUMERATION_BUDGET: u128 = 1 << 24;

pub type JointTable = BTreeMap<Vec<Symbol>, BTreeMap<Vec<Symbol>, f64>>;

/// Exact joint distribution of the cells `past` and `future` (offsets relative
/// to a common reference time).
pub fn exact_cone_joint(g: &Graph, rule: &LocalRule, initial: &[f64], past: &[Offset], future: &[Offset]) -> Result<JointTable> {
    rule.validate(g)?;
    let a = rule.alphabet as usize;
    if initial.len() != a {
        return Err(Error::Params("initial distribution length differs from alphabet".into()));
    }
    let wanted: Vec<Offset> = past.iter().chain(future).copied().collect();
    let Some(base) = wanted.iter().map(|o| o.dt).min() else {
        return Ok(JointTable::from([(Vec::new(), BTreeMap::from([(Vec::new(), 1.0)]))]));
    };

    let mut cells: BTreeSet<(i64, Vertex)> = BTreeSet::new();
    let independent = matches!(rule.kind, RuleKind::Iid { .. });
    let mut stack: Vec<(i64, Vertex)> = wanted.iter().map(|o| (o.dt, o.vertex)).collect();
    while let Some(c) = stack.pop() {
        if !cells.insert(c) {
            continue;
        }
        if !independent && c.0 > base {
            for u in rule.neighborhood(g, c.1) {
                stack.push((c.0 - 1, u));
            }
        }
    }
    let cells: Vec<(i64, Vertex)> = cells.into_iter().collect();
    let index: BTreeMap<(i64, Vertex), usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    enum Source {
        Draw(Vec<f64>),
        Table { inputs: Vec<usize>, epsilon: f64 },
    }
    let mut leaves: u128 = 1;
    let sources: Vec<Source> = cells
        .iter()
        .map(|&(dt, v)| match &rule.kind {
            RuleKind::Iid { p } => {
                leaves = leaves.saturating_mul(p.iter().filter(|&&x| x > 0.0).count() as u128);
                Source::Draw(p.clone())
            }
            RuleKind::Table { .. } | RuleKind::NoisyTable { .. } if dt == base => {
                leaves = leaves.saturating_mul(initial.iter().filter(|&&x| x > 0.0).count() as u128);
                Source::Draw(initial.to_vec())
            }
            RuleKind::Table { .. } | RuleKind::NoisyTable { .. } => {
                let epsilon = match rule.kind {
                    RuleKind::NoisyTable { epsilon, .. } => epsilon,
                    _ => 0.0,
                };
                if epsilon > 0.0 {
                    leaves = leaves.saturating_mul(if epsilon < 1.0 { a as u128 } else { (a - 1) as u128 });
                }
                let inputs = rule.neighborhood(g, v).iter().map(|&u| index[&(dt - 1, u)]).collect();
                Source::Table { inputs, epsilon }
            }
        })
        .collect();
    if leaves > ENUMERATION_BUDGET {
        return Err(Error::TooLarge(format!("{leaves} joint outcomes exceed the enumeration budget")));
    }

    let past_idx: Vec<usize> = past.iter().map(|o| index[&(o.dt, o.vertex)]).collect();
    let future_idx: Vec<usize> = future.iter().map(|o| index[&(o.dt, o.vertex)]).collect();
    let mut joint = JointTable::new();
    let mut values = vec![0 as Symbol; cells.len()];

    fn walk(
        i: usize,
        prob: f64,
        rule: &LocalRule,
        sources: &[Source],
        values: &mut Vec<Symbol>,
        emit: &mut dyn FnMut(&[Symbol], f64),
    ) {
        if prob == 0.0 {
            return;
        }
        if i == sources.len() {
            emit(values, prob);
            return;
        }
        match &sources[i] {
            Source::Draw(p) => {
                for (s, &w) in p.iter().enumerate() {
                    if w > 0.0 {
                        values[i] = s as Symbol;
                        walk(i + 1, prob * w, rule, sources, values, emit);
                    }
                }
            }
            Source::Table { inputs, epsilon } => {
                let nb: Vec<Symbol> = inputs.iter().map(|&j| values[j]).collect();
                let s = rule.apply_table(&nb);
                let a = rule.alphabet as usize;
                if *epsilon == 0.0 || a == 1 {
                    values[i] = s;
                    walk(i + 1, prob, rule, sources, values, emit);
                } else {
                    for x in 0..a {
                        let w = if x == s as usize { 1.0 - epsilon } else { epsilon / (a - 1) as f64 };
                        values[i] = x as Symbol;
                        walk(i + 1, prob * w, rule, sources, values, emit);
                    }
                }
            }
        }
    }

    // Cells are sorted by time, so every table input precedes its output.
    walk(0, 1.0, rule, &sources, &mut values, &mut |vals, p| {
        let pk: Vec<Symbol> = past_idx.iter().map(|&j| vals[j]).collect();
        let fk: Vec<Symbol> = future_idx.iter().map(|&j| vals[j]).collect();
        *joint.entry(pk).or_default().entry(fk).or_insert(0.0) += p;
    });
    Ok(joint)
}

/// Normalizes each row of a joint table.
pub fn conditionals(joint: &JointTable) -> BTreeMap<Vec<Symbol>, BTreeMap<Vec<Symbol>, f64>> {
    joint
        .iter()
        .map(|(past, row)| {
            let z: f64 = row.values().sum();
            (past.clone(), row.iter().map(|(f, p)| (f.clone(), p / z)).collect())
        })
        .collect()
}

/// Groups pasts whose conditional rows agree within [`ORACLE_TOL`]; block
/// indices follow first appearance in key order.
pub fn partition_by_conditional(cond: &BTreeMap<Vec<Symbol>, BTreeMap<Vec<Symbol>, f64>>) -> BTreeMap<Vec<Symbol>, usize> {
    let close = |a: &BTreeMap<Vec<Symbol>, f64>, b: &BTreeMap<Vec<Symbol>, f64>| {
        a.keys().chain(b.keys()).all(|k| {
            let (x, y) = (a.get(k).copied().unwrap_or(0.0), b.get(k).copied().unwrap_or(0.0));
            (x - y).abs() <= ORACLE_TOL
        })
    };
    let mut reps: Vec<&BTreeMap<Vec<Symbol>, f64>> = Vec::new();
    cond.iter()
        .map(|(past, row)| {
            let i = reps.iter().position(|r| close(r, row)).unwrap_or_else(|| {
                reps.push(row);
                reps.len() - 1
            });
            (past.clone(), i)
        })
        .collect()
}

/// Exact conditional future distribution of every possible past, per class of
/// `layout`, evaluated at the class's first vertex.
pub fn exact_conditionals(
    g: &Graph,
    rule: &LocalRule,
    initial: &[f64],
    layout: &ConeLayout,
) -> Result<Vec<BTreeMap<ConfigKey, ProbVector<f64>>>> {
    let alphabet = rule.alphabet;
    layout
        .classes
        .iter()
        .enumerate()
        .map(|(c, class)| {
            let v = class.vertices[0];
            let cones = &layout.cones[v];
            let joint = exact_cone_joint(g, rule, initial, &cones.past, &cones.future)?;
            let (pc, fc) = (layout.past_codec(c, alphabet), layout.future_codec(c, alphabet));
            Ok(conditionals(&joint)
                .into_iter()
                .map(|(past, row)| {
                    let mut support: Vec<(ConfigKey, f64)> = row.into_iter().map(|(f, p)| (fc.encode(&f), p)).collect();
                    support.sort_by(|x, y| x.0.cmp(&y.0));
                    let (support, probs) = support.into_iter().unzip();
                    (pc.encode(&past), ProbVector { support, probs })
                })
                .collect())
        })
        .collect()
}
