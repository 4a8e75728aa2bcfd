//! Ground-truth generators: local update rules and a seeded simulator.
//!
//! All built-in rules read a radius-1 neighborhood, so simulated fields have
//! propagation speed `c = 1`.
//!
//! Random numbers come from ChaCha8 seeded with the run seed. Cell `<v, t>`
//! uses stream `t` starting at word position `16 * v`, i.e. its own block of
//! eight `u64` draws, so results do not depend on thread scheduling or platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Symbol;
use crate::error::{Error, Result};
use crate::field::FieldSeries;
use crate::graph::{Graph, Vertex};

const WORDS_PER_CELL: u128 = 16;
const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Every cell drawn independently from `p`.
    Iid { p: Vec<f64> },
    /// Deterministic map from the ordered neighborhood to the next symbol.
    Table { table: Vec<Symbol> },
    /// Table output replaced, with probability `epsilon`, by a uniformly drawn different symbol.
    NoisyTable { table: Vec<Symbol>, epsilon: f64 },
}

/// Local update rule.
///
/// The neighborhood of `v` is `v` followed by its neighbors, in ascending id
/// order unless an explicit per-vertex order is attached. Table index is the
/// radix-`alphabet` number of the neighborhood symbols, `v` most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalRule {
    pub alphabet: u16,
    pub kind: RuleKind,
    /// Optional explicit neighbor order per vertex (excluding the vertex itself).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighbor_order: Option<Vec<Vec<Vertex>>>,
}

impl LocalRule {
    pub fn iid(p: Vec<f64>) -> Result<Self> {
        check_probabilities(&p)?;
        Ok(LocalRule {
            alphabet: p.len() as u16,
            kind: RuleKind::Iid { p },
            neighbor_order: None,
        })
    }

    pub fn table(alphabet: u16, table: Vec<Symbol>) -> Result<Self> {
        if table.iter().any(|&s| s as u16 >= alphabet) {
            return Err(Error::Rule("table output outside alphabet".into()));
        }
        Ok(LocalRule {
            alphabet,
            kind: RuleKind::Table { table },
            neighbor_order: None,
        })
    }

    /// Elementary (binary, radius-1) rule on a ring of `n` vertices, in
    /// Wolfram numbering: the output for `(left, self, right)` is bit
    /// `4 left + 2 self + right` of `number`, with `left = v - 1`.
    pub fn elementary(number: u8, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Rule("elementary rules need a ring of at least 3".into()));
        }
        // Neighborhood is (self, left, right).
        let mut table = vec![0; 8];
        for (idx, slot) in table.iter_mut().enumerate() {
            let s = (idx >> 2) & 1;
            let l = (idx >> 1) & 1;
            let r = idx & 1;
            *slot = (number >> (4 * l + 2 * s + r)) & 1;
        }
        Ok(LocalRule {
            alphabet: 2,
            kind: RuleKind::Table { table },
            neighbor_order: Some(ring_order(n)),
        })
    }

    /// Shift on a ring: the next value at `v` is the current value at `v - 1`.
    pub fn shift(alphabet: u16, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Rule("shift needs a ring of at least 3".into()));
        }
        let a = alphabet as usize;
        let table = (0..a * a * a).map(|idx| ((idx / a) % a) as Symbol).collect();
        Ok(LocalRule {
            alphabet,
            kind: RuleKind::Table { table },
            neighbor_order: Some(ring_order(n)),
        })
    }

    /// Rule 184 (traffic rule) on a ring.
    pub fn rule184(n: usize) -> Result<Self> {
        LocalRule::elementary(184, n)
    }

    /// Adds output noise to a table rule.
    pub fn with_noise(self, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Rule(format!("noise {epsilon} outside [0, 1]")));
        }
        let table = match self.kind {
            RuleKind::Table { table } | RuleKind::NoisyTable { table, .. } => table,
            RuleKind::Iid { .. } => return Err(Error::Rule("noise applies to table rules only".into())),
        };
        Ok(LocalRule {
            kind: RuleKind::NoisyTable { table, epsilon },
            ..self
        })
    }

    pub fn is_deterministic(&self) -> bool {
        match &self.kind {
            RuleKind::Table { .. } => true,
            RuleKind::NoisyTable { epsilon, .. } => *epsilon == 0.0,
            RuleKind::Iid { p } => p.iter().filter(|&&x| x > 0.0).count() <= 1,
        }
    }

    /// Ordered neighborhood of `v` (self first).
    pub fn neighborhood(&self, g: &Graph, v: Vertex) -> Vec<Vertex> {
        let mut out = vec![v];
        match &self.neighbor_order {
            Some(order) => out.extend_from_slice(&order[v]),
            None => out.extend_from_slice(g.neighbors(v)),
        }
        out
    }

    /// Checks the rule against the graph: alphabet, table size, neighbor order.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        match &self.kind {
            RuleKind::Iid { p } => {
                check_probabilities(p)?;
                if p.len() != self.alphabet as usize {
                    return Err(Error::Rule("probability vector length differs from alphabet".into()));
                }
                return Ok(());
            }
            RuleKind::NoisyTable { epsilon, .. } if !(0.0..=1.0).contains(epsilon) => {
                return Err(Error::Rule(format!("noise {epsilon} outside [0, 1]")));
            }
            _ => {}
        }
        if let Some(order) = &self.neighbor_order {
            if order.len() != g.vertex_count() {
                return Err(Error::Rule("neighbor order does not cover the graph".into()));
            }
            for (v, nb) in order.iter().enumerate() {
                let mut sorted = nb.clone();
                sorted.sort_unstable();
                if sorted != g.neighbors(v) {
                    return Err(Error::Rule(format!("neighbor order at {v} does not match the graph")));
                }
            }
        }
        let degrees: Vec<usize> = (0..g.vertex_count()).map(|v| g.degree(v)).collect();
        if degrees.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Rule("table rules need a graph of constant degree".into()));
        }
        let k = degrees.first().copied().unwrap_or(0) + 1;
        let expected = (self.alphabet as usize).checked_pow(k as u32);
        if Some(self.table_entries().len()) != expected {
            return Err(Error::Rule(format!(
                "table has {} entries, neighborhood of size {k} needs {}",
                self.table_entries().len(),
                expected.map_or("too many".to_string(), |e| e.to_string())
            )));
        }
        Ok(())
    }

    pub(crate) fn table_entries(&self) -> &[Symbol] {
        match &self.kind {
            RuleKind::Table { table } | RuleKind::NoisyTable { table, .. } => table,
            RuleKind::Iid { .. } => &[],
        }
    }

    /// Deterministic table output for an ordered neighborhood configuration.
    pub fn apply_table(&self, neighborhood: &[Symbol]) -> Symbol {
        let a = self.alphabet as usize;
        let idx = neighborhood.iter().fold(0usize, |acc, &s| acc * a + s as usize);
        self.table_entries()[idx]
    }
}

fn ring_order(n: usize) -> Vec<Vec<Vertex>> {
    (0..n).map(|v| vec![(v + n - 1) % n, (v + 1) % n]).collect()
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.len() > 256 {
        return Err(Error::Rule("probability vector must have 1..=256 entries".into()));
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Rule("probabilities must lie in [0, 1]".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::Rule(format!("probabilities sum to {s}, not 1")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Iid { p: Vec<f64> },
    Slice { values: Vec<Symbol> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps: usize,
    pub seed: u64,
    pub initial: InitialCondition,
}

impl SimConfig {
    /// Uniform i.i.d. initial slice.
    pub fn uniform(steps: usize, seed: u64, alphabet: u16) -> Self {
        SimConfig {
            steps,
            seed,
            initial: InitialCondition::Iid {
                p: vec![1.0 / alphabet as f64; alphabet as usize],
            },
        }
    }
}

struct CellRng(ChaCha8Rng);

impl CellRng {
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

fn row_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(t as u64);
    r
}

fn cell_rng(row: &ChaCha8Rng, v: Vertex) -> CellRng {
    let mut r = row.clone();
    r.set_word_pos(v as u128 * WORDS_PER_CELL);
    CellRng(r)
}

fn draw(p: &[f64], u: f64) -> Symbol {
    let mut acc = 0.0;
    let mut last = 0;
    for (s, &w) in p.iter().enumerate() {
        if w > 0.0 {
            last = s;
            acc += w;
            if u < acc {
                return s as Symbol;
            }
        }
    }
    last as Symbol
}

/// Runs `rule` on `g` for `cfg.steps` time steps.
pub fn simulate(g: &Graph, rule: &LocalRule, cfg: &SimConfig) -> Result<FieldSeries> {
    if cfg.steps == 0 {
        return Err(Error::Params("simulation needs at least one step".into()));
    }
    rule.validate(g)?;
    let n = g.vertex_count();
    let a = rule.alphabet;

    let first: Vec<Symbol> = match &cfg.initial {
        InitialCondition::Slice { values } => {
            if values.len() != n || values.iter().any(|&s| s as u16 >= a) {
                return Err(Error::Params("initial slice does not fit graph/alphabet".into()));
            }
            values.clone()
        }
        InitialCondition::Iid { p } => {
            check_probabilities(p)?;
            if p.len() != a as usize {
                return Err(Error::Params("initial distribution length differs from alphabet".into()));
            }
            let base = row_rng(cfg.seed, 0);
            (0..n).map(|v| draw(p, cell_rng(&base, v).unit())).collect()
        }
    };

    let neighborhoods: Vec<Vec<Vertex>> = (0..n).map(|v| rule.neighborhood(g, v)).collect();
    let mut values = Vec::with_capacity(n * cfg.steps);
    values.extend_from_slice(&first);
    for t in 1..cfg.steps {
        let prev = values[(t - 1) * n..t * n].to_vec();
        let base = row_rng(cfg.seed, t);
        let next: Vec<Symbol> = (0..n)
            .into_par_iter()
            .map(|v| {
                let mut rng = cell_rng(&base, v);
                match &rule.kind {
                    RuleKind::Iid { p } => draw(p, rng.unit()),
                    RuleKind::Table { .. } => {
                        let nb: Vec<Symbol> = neighborhoods[v].iter().map(|&u| prev[u]).collect();
                        rule.apply_table(&nb)
                    }
                    RuleKind::NoisyTable { epsilon, .. } => {
                        let nb: Vec<Symbol> = neighborhoods[v].iter().map(|&u| prev[u]).collect();
                        let s = rule.apply_table(&nb);
                        if a > 1 && rng.unit() < *epsilon {
                            let k = (rng.0.next_u64() % (a as u64 - 1)) as u16;
                            ((s as u16 + 1 + k) % a) as Symbol
                        } else {
                            s
                        }
                    }
                }
            })
            .collect();
        values.extend_from_slice(&next);
    }
    Ok(FieldSeries::from_flat(n, a, values))
}
