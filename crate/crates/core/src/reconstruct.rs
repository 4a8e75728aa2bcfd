//! Clustering of past configurations into estimated local causal states.
//!
//! Per class, pasts are visited in a seeded random order. Each past joins the
//! first existing state (in creation order) whose aggregate future counts are
//! not significantly different from its own, and that state's counts absorb
//! the past's; otherwise the past starts a new state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigCodec, ConfigKey};
use crate::distribution::ProbVector;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::homogeneity::{chi2_sf, chi2_statistic, homogeneity_test, merge_sparse_bins, TestConfig, Verdict};
use crate::layout::{ConeClass, ConeLayout};
use crate::scalar::Scalar;
use crate::stats::{ConeDatabase, PastEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CausalState {
    pub id: StateId,
    pub members: BTreeSet<ConfigKey>,
    pub futures: BTreeMap<ConfigKey, u64>,
    pub total: u64,
}

impl CausalState {
    fn new(id: StateId) -> Self {
        CausalState {
            id,
            members: BTreeSet::new(),
            futures: BTreeMap::new(),
            total: 0,
        }
    }

    fn absorb(&mut self, past: &ConfigKey, entry: &PastEntry) {
        self.members.insert(past.clone());
        for (k, &n) in &entry.futures {
            *self.futures.entry(k.clone()).or_insert(0) += n;
        }
        self.total += entry.total;
    }

    /// Aggregate future distribution of the state.
    pub fn distribution<F: Scalar>(&self) -> Result<ProbVector<F>> {
        ProbVector::from_counts(&self.futures)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassStates {
    pub states: Vec<CausalState>,
    index: BTreeMap<ConfigKey, StateId>,
}

impl ClassStates {
    pub fn from_states(states: Vec<CausalState>) -> Self {
        let index = states
            .iter()
            .flat_map(|s| s.members.iter().map(move |m| (m.clone(), s.id)))
            .collect();
        ClassStates { states, index }
    }

    pub fn state_of(&self, past: &ConfigKey) -> Option<StateId> {
        self.index.get(past).copied()
    }

    pub fn get(&self, id: StateId) -> Option<&CausalState> {
        self.states.get(id.0 as usize)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The partition of pasts, independent of state numbering.
    pub fn partition(&self) -> BTreeSet<BTreeSet<ConfigKey>> {
        self.states.iter().map(|s| s.members.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub test: Option<TestConfig>,
    pub seed: Option<u64>,
    pub refine: bool,
    pub database_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSet {
    pub layout: ConeLayout,
    pub alphabet: u16,
    pub classes: Vec<ClassStates>,
    pub provenance: Provenance,
}

impl StateSet {
    pub fn state_count(&self) -> usize {
        self.classes.iter().map(ClassStates::len).sum()
    }

    pub fn max_states_per_class(&self) -> usize {
        self.classes.iter().map(ClassStates::len).max().unwrap_or(0)
    }

    pub fn past_codec(&self, class: usize) -> ConfigCodec {
        self.layout.past_codec(class, self.alphabet)
    }

    pub fn future_codec(&self, class: usize) -> ConfigCodec {
        self.layout.future_codec(class, self.alphabet)
    }

    /// Same set partition in every class.
    pub fn same_partition(&self, other: &StateSet) -> bool {
        self.classes.len() == other.classes.len()
            && self.classes.iter().zip(&other.classes).all(|(a, b)| a.partition() == b.partition())
    }

    /// Replaces future counts with those in `db`; members unseen in `db`
    /// contribute nothing.
    pub fn attach_counts(&mut self, db: &ConeDatabase) -> Result<()> {
        if db.layout != self.layout || db.alphabet != self.alphabet {
            return Err(Error::Mismatch("database layout differs from state set".into()));
        }
        for (c, cs) in self.classes.iter_mut().enumerate() {
            for s in &mut cs.states {
                s.futures.clear();
                s.total = 0;
                let members = std::mem::take(&mut s.members);
                for m in &members {
                    if let Some(e) = db.classes[c].pasts.get(m) {
                        s.absorb(m, e);
                    }
                }
                s.members = members;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> StateSetJson {
        StateSetJson {
            params: self.layout.params,
            pooling: self.layout.pooling,
            alphabet: self.alphabet,
            provenance: self.provenance.clone(),
            classes: self
                .classes
                .iter()
                .enumerate()
                .map(|(c, cs)| {
                    let (pc, fc) = (self.past_codec(c), self.future_codec(c));
                    let cl = &self.layout.classes[c];
                    ClassStatesJson {
                        signature: cl.signature.clone(),
                        vertices: cl.vertices.clone(),
                        past_len: cl.past_len,
                        future_len: cl.future_len,
                        states: cs
                            .states
                            .iter()
                            .map(|s| StateJson {
                                id: s.id.0,
                                members: s.members.iter().map(|m| pc.format(m)).collect(),
                                futures: s.futures.iter().map(|(k, &n)| (fc.format(k), n)).collect(),
                            })
                            .collect(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_json(doc: &StateSetJson, g: &Graph) -> Result<Self> {
        let layout = ConeLayout::new(g, doc.params, doc.pooling)?;
        let described: Vec<ConeClass> = doc
            .classes
            .iter()
            .map(|c| ConeClass {
                signature: c.signature.clone(),
                vertices: c.vertices.clone(),
                past_len: c.past_len,
                future_len: c.future_len,
            })
            .collect();
        layout.check_classes(&described)?;
        let mut classes = Vec::with_capacity(doc.classes.len());
        for (c, cj) in doc.classes.iter().enumerate() {
            let pc = layout.past_codec(c, doc.alphabet);
            let fc = layout.future_codec(c, doc.alphabet);
            let mut states = Vec::with_capacity(cj.states.len());
            let mut seen = BTreeSet::new();
            for (i, sj) in cj.states.iter().enumerate() {
                if sj.id as usize != i {
                    return Err(Error::Mismatch(format!("state ids in class {c} are not 0..k in order")));
                }
                let mut s = CausalState::new(StateId(sj.id));
                for m in &sj.members {
                    let key = pc.parse(m)?;
                    if !seen.insert(key.clone()) {
                        return Err(Error::Mismatch(format!("past {m} belongs to two states")));
                    }
                    s.members.insert(key);
                }
                for (k, &n) in &sj.futures {
                    s.futures.insert(fc.parse(k)?, n);
                    s.total += n;
                }
                states.push(s);
            }
            classes.push(ClassStates::from_states(states));
        }
        Ok(StateSet {
            layout,
            alphabet: doc.alphabet,
            classes,
            provenance: doc.provenance.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSetJson {
    pub params: crate::cone::ConeParams,
    pub pooling: crate::layout::Pooling,
    pub alphabet: u16,
    pub provenance: Provenance,
    pub classes: Vec<ClassStatesJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStatesJson {
    pub signature: String,
    pub vertices: Vec<usize>,
    pub past_len: usize,
    pub future_len: usize,
    pub states: Vec<StateJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub id: u32,
    pub members: Vec<String>,
    pub futures: BTreeMap<String, u64>,
}

/// Aligned count vectors over the union of two supports.
pub fn aligned_counts(a: &BTreeMap<ConfigKey, u64>, b: &BTreeMap<ConfigKey, u64>) -> (Vec<u64>, Vec<u64>) {
    let keys: BTreeSet<&ConfigKey> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0), b.get(k).copied().unwrap_or(0)))
        .unzip()
}

fn class_rng(seed: u64, class: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class as u64);
    rng
}

fn cluster_class(
    pasts: &BTreeMap<ConfigKey, PastEntry>,
    cfg: &TestConfig,
    seed: u64,
    class: usize,
    refine: bool,
) -> Result<ClassStates> {
    let mut order: Vec<(&ConfigKey, &PastEntry)> = pasts.iter().collect();
    order.shuffle(&mut class_rng(seed, class));

    let mut states: Vec<CausalState> = Vec::new();
    for (past, entry) in order {
        let mut home = None;
        for (i, s) in states.iter().enumerate() {
            let (a, b) = aligned_counts(&entry.futures, &s.futures);
            if homogeneity_test(&a, &b, cfg)? == Verdict::Same {
                home = Some(i);
                break;
            }
        }
        match home {
            Some(i) => states[i].absorb(past, entry),
            None => {
                let mut s = CausalState::new(StateId(states.len() as u32));
                s.absorb(past, entry);
                states.push(s);
            }
        }
    }

    if refine && states.len() > 1 {
        states = refine_once(pasts, &states, cfg);
    }
    Ok(ClassStates::from_states(states))
}

/// Reassigns each past to the final state it matches best (largest p-value),
/// then re-aggregates and drops emptied states.
fn refine_once(pasts: &BTreeMap<ConfigKey, PastEntry>, states: &[CausalState], cfg: &TestConfig) -> Vec<CausalState> {
    let mut buckets: Vec<Vec<&ConfigKey>> = vec![Vec::new(); states.len()];
    for (past, entry) in pasts {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, s) in states.iter().enumerate() {
            let (a, b) = aligned_counts(&entry.futures, &s.futures);
            let (ka, kb) = merge_sparse_bins(&a, &b, cfg.min_expected);
            let df = ka.len().saturating_sub(1);
            let p = if df == 0 { 1.0 } else { chi2_sf(chi2_statistic(&ka, &kb), df) };
            if p > best.0 {
                best = (p, i);
            }
        }
        buckets[best.1].push(past);
    }
    let mut out = Vec::new();
    for bucket in buckets.into_iter().filter(|b| !b.is_empty()) {
        let mut s = CausalState::new(StateId(out.len() as u32));
        for past in bucket {
            s.absorb(past, &pasts[past]);
        }
        out.push(s);
    }
    out
}

/// Clusters every class of `db` with the one-pass algorithm.
pub fn reconstruct_states(db: &ConeDatabase, cfg: &TestConfig, seed: u64) -> Result<StateSet> {
    reconstruct_states_with(db, cfg, seed, false)
}

/// As [`reconstruct_states`], optionally followed by one reassignment pass.
pub fn reconstruct_states_with(db: &ConeDatabase, cfg: &TestConfig, seed: u64, refine: bool) -> Result<StateSet> {
    cfg.validate()?;
    if db.is_empty() {
        return Err(Error::NoData("empty cone database".into()));
    }
    let classes = db
        .classes
        .par_iter()
        .enumerate()
        .map(|(c, counts)| cluster_class(&counts.pasts, cfg, seed, c, refine))
        .collect::<Result<Vec<_>>>()?;
    Ok(StateSet {
        layout: db.layout.clone(),
        alphabet: db.alphabet,
        classes,
        provenance: Provenance {
            method: "reconstructed".into(),
            test: Some(*cfg),
            seed: Some(seed),
            refine,
            database_hash: Some(database_hash(db)?),
        },
    })
}

/// SHA-256 of the database's JSON export.
pub fn database_hash(db: &ConeDatabase) -> Result<String> {
    Ok(crate::hash::sha256_hex(serde_json::to_string(&db.to_json())?.as_bytes()))
}

/// Re-tests every member past against its state's aggregate; returns
/// `(violations, tests)`.
pub fn sufficiency_violations(db: &ConeDatabase, s: &StateSet, cfg: &TestConfig) -> Result<(usize, usize)> {
    let mut violations = 0;
    let mut tests = 0;
    for (c, cs) in s.classes.iter().enumerate() {
        for state in &cs.states {
            for m in &state.members {
                let Some(entry) = db.classes[c].pasts.get(m) else { continue };
                let (a, b) = aligned_counts(&entry.futures, &state.futures);
                tests += 1;
                if homogeneity_test(&a, &b, cfg)? == Verdict::Different {
                    violations += 1;
                }
            }
        }
    }
    Ok((violations, tests))
}

/// Partition of pasts by exact equality of their conditional distributions
/// (componentwise within `1e-12`). Counts are left empty; see
/// [`StateSet::attach_counts`].
pub fn oracle_states(
    layout: &ConeLayout,
    alphabet: u16,
    exact: &[BTreeMap<ConfigKey, ProbVector<f64>>],
) -> Result<StateSet> {
    if exact.len() != layout.classes.len() {
        return Err(Error::Mismatch("one conditional table per class required".into()));
    }
    let classes = exact
        .iter()
        .map(|table| {
            let mut reps: Vec<&ProbVector<f64>> = Vec::new();
            let mut states: Vec<CausalState> = Vec::new();
            for (past, dist) in table {
                let found = reps.iter().position(|r| r.max_abs_diff(dist) <= ORACLE_TOL);
                let i = found.unwrap_or_else(|| {
                    reps.push(dist);
                    states.push(CausalState::new(StateId(states.len() as u32)));
                    states.len() - 1
                });
                states[i].members.insert(past.clone());
            }
            ClassStates::from_states(states)
        })
        .collect();
    Ok(StateSet {
        layout: layout.clone(),
        alphabet,
        classes,
        provenance: Provenance {
            method: "oracle".into(),
            test: None,
            seed: None,
            refine: false,
            database_hash: None,
        },
    })
}

pub const ORACLE_TOL: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ConeParams;
    use crate::graph::Graph;
    use crate::layout::Pooling;
    use crate::rules::{simulate, LocalRule, SimConfig};
    use crate::stats::build_cone_database;

    #[test]
    fn single_past_single_state() {
        let g = Graph::ring(5).unwrap();
        let f = crate::field::FieldSeries::new(5, 2, vec![vec![0; 5]; 10]).unwrap();
        let db = build_cone_database(&f, &g, ConeParams::new(1, 2, 1).unwrap(), Pooling::On).unwrap();
        let s = reconstruct_states(&db, &TestConfig::chi_squared(0.05), 1).unwrap();
        assert_eq!(s.classes[0].len(), 1);
        assert_eq!(s.classes[0].states[0].members.len(), 1);
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint() {
        let g = Graph::ring(16).unwrap();
        let f = simulate(&g, &LocalRule::rule184(16).unwrap(), &SimConfig::uniform(400, 9, 2)).unwrap();
        let db = build_cone_database(&f, &g, ConeParams::new(1, 2, 1).unwrap(), Pooling::Off).unwrap();
        let s = reconstruct_states(&db, &TestConfig::chi_squared(0.01), 5).unwrap();
        for (c, cs) in s.classes.iter().enumerate() {
            let mut all = BTreeSet::new();
            for st in &cs.states {
                assert!(!st.members.is_empty());
                assert_eq!(st.total, st.futures.values().sum::<u64>());
                for m in &st.members {
                    assert!(all.insert(m.clone()), "past in two states");
                }
            }
            let observed: BTreeSet<ConfigKey> = db.classes[c].pasts.keys().cloned().collect();
            assert_eq!(all, observed);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = Graph::ring(12).unwrap();
        let f = simulate(&g, &LocalRule::iid(vec![0.5, 0.5]).unwrap(), &SimConfig::uniform(300, 2, 2)).unwrap();
        let db = build_cone_database(&f, &g, ConeParams::new(1, 2, 1).unwrap(), Pooling::Off).unwrap();
        let cfg = TestConfig::chi_squared(0.05);
        assert_eq!(reconstruct_states(&db, &cfg, 8).unwrap(), reconstruct_states(&db, &cfg, 8).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let g = Graph::ring(8).unwrap();
        let f = simulate(&g, &LocalRule::shift(2, 8).unwrap().with_noise(0.1).unwrap(), &SimConfig::uniform(500, 2, 2)).unwrap();
        let db = build_cone_database(&f, &g, ConeParams::new(1, 2, 1).unwrap(), Pooling::On).unwrap();
        let s = reconstruct_states(&db, &TestConfig::chi_squared(0.001), 3).unwrap();
        let text = serde_json::to_string(&s.to_json()).unwrap();
        let back = StateSet::from_json(&serde_json::from_str(&text).unwrap(), &g).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn oracle_groups_equal_distributions() {
        let g = Graph::ring(5).unwrap();
        let layout = ConeLayout::new(&g, ConeParams::new(1, 1, 1).unwrap(), Pooling::On).unwrap();
        let pc = layout.past_codec(0, 2);
        let fc = layout.future_codec(0, 2);
        let d = |x: &[u8]| ProbVector::point_mass(fc.encode(x));
        let table: BTreeMap<ConfigKey, ProbVector<f64>> =
            [(pc.encode(&[0]), d(&[0, 0, 0])), (pc.encode(&[1]), d(&[0, 0, 0]))].into_iter().collect();
        let s = oracle_states(&layout, 2, &[table]).unwrap();
        assert_eq!(s.classes[0].len(), 1);
    }

    #[test]
    fn refinement_keeps_a_partition() {
        let g = Graph::ring(10).unwrap();
        let f = simulate(&g, &LocalRule::rule184(10).unwrap().with_noise(0.05).unwrap(), &SimConfig::uniform(300, 4, 2)).unwrap();
        let db = build_cone_database(&f, &g, ConeParams::new(1, 2, 1).unwrap(), Pooling::On).unwrap();
        let s = reconstruct_states_with(&db, &TestConfig::chi_squared(0.01), 2, true).unwrap();
        let members: usize = s.classes[0].states.iter().map(|st| st.members.len()).sum();
        assert_eq!(members, db.classes[0].pasts.len());
        assert!(s.provenance.refine);
    }
}
