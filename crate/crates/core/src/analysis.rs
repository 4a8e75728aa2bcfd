//! Complexity measures and conditional-independence diagnostics on labeled fields.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::ConfigKey;
use crate::error::{Error, Result};
use crate::field::FieldSeries;
use crate::graph::{Graph, Vertex};
use crate::info::{conditional_entropy_sparse, conditional_mutual_information_sparse, entropy, mi_bias_bits, mutual_information_sparse};
use crate::label::StateField;
use crate::layout::ConeLayout;
use crate::reconstruct::{StateId, StateSet};
use crate::scalar::Scalar;
use crate::stats::{read_offsets, ConeDatabase};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmiConfig {
    /// Largest CMI, in bits, still read as conditional independence.
    pub threshold_bits: f64,
    /// Conditioning cells with fewer samples are left out of the estimate.
    pub min_cell: u64,
}

impl Default for CmiConfig {
    fn default() -> Self {
        CmiConfig {
            threshold_bits: 0.05,
            min_cell: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmiVerdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmiReport {
    pub cmi_bits: f64,
    pub verdict: CmiVerdict,
    pub n_samples: u64,
    /// Samples in conditioning cells with at least `min_cell` members.
    pub used_samples: u64,
    pub cells: usize,
    pub used_cells: usize,
    /// First-order plug-in bias of `cmi_bits` under independence.
    pub bias_bits: f64,
    pub threshold_bits: f64,
}

/// Estimates `I[X;Y|Z]` over the well-sampled conditioning cells of `joint`.
/// The verdict is inconclusive when no cell has `min_cell` samples.
pub fn cmi_report<X: Ord + Clone, Y: Ord + Clone, Z: Ord + Clone>(joint: &BTreeMap<(X, Y, Z), u64>, cfg: &CmiConfig) -> Result<CmiReport> {
    let n_samples: u64 = joint.values().sum();
    if n_samples == 0 {
        return Err(Error::NoData("no samples for conditional independence test".into()));
    }
    let mut per_cell: BTreeMap<&Z, (u64, BTreeSet<&X>, BTreeSet<&Y>)> = BTreeMap::new();
    for ((x, y, z), &n) in joint {
        let e = per_cell.entry(z).or_default();
        e.0 += n;
        e.1.insert(x);
        e.2.insert(y);
    }
    let kept: BTreeMap<(X, Y, Z), u64> = joint
        .iter()
        .filter(|((_, _, z), _)| per_cell[z].0 >= cfg.min_cell)
        .map(|(k, &n)| (k.clone(), n))
        .collect();
    let used_samples: u64 = kept.values().sum();
    let used: Vec<_> = per_cell.values().filter(|c| c.0 >= cfg.min_cell).collect();
    let mut report = CmiReport {
        cmi_bits: 0.0,
        verdict: CmiVerdict::Inconclusive,
        n_samples,
        used_samples,
        cells: per_cell.len(),
        used_cells: used.len(),
        bias_bits: 0.0,
        threshold_bits: cfg.threshold_bits,
    };
    if used_samples == 0 {
        return Ok(report);
    }
    report.cmi_bits = conditional_mutual_information_sparse(&kept)?;
    report.bias_bits = used
        .iter()
        .map(|c| ((c.1.len() - 1) * (c.2.len() - 1)) as f64)
        .sum::<f64>()
        / (2.0 * used_samples as f64 * std::f64::consts::LN_2);
    report.verdict = if report.cmi_bits <= cfg.threshold_bits {
        CmiVerdict::Consistent
    } else {
        CmiVerdict::Inconsistent
    };
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassComplexity<F: Scalar> {
    pub class: usize,
    pub vertices: Vec<Vertex>,
    /// `H[S]` from state occupation in the labeled field.
    pub c_bits: F,
    /// `H[S]` with states weighted by their pasts' counts in the database.
    pub state_entropy_bits: F,
    /// Plug-in `I[L+; L-]` on the database counts.
    pub predictive_info_lower_bits: F,
    pub predictive_info_bias_bits: f64,
    pub n_samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport<F: Scalar> {
    pub classes: Vec<ClassComplexity<F>>,
}

impl<F: Scalar> ComplexityReport<F> {
    /// `vertex_class,C_bits,n` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex_class,C_bits,n\n");
        for c in &self.classes {
            writeln!(out, "{},{},{}", c.class, c.c_bits, c.n_samples).unwrap();
        }
        out
    }

    /// Occupation-weighted mean of `c_bits` over classes.
    pub fn mean_c_bits(&self) -> F {
        let n: u64 = self.classes.iter().map(|c| c.n_samples).sum();
        if n == 0 {
            return F::zero();
        }
        self.classes.iter().map(|c| c.c_bits * F::from_count(c.n_samples)).sum::<F>() / F::from_count(n)
    }
}

pub fn local_complexity<F: Scalar>(sf: &StateField, db: &ConeDatabase, s: &StateSet) -> Result<ComplexityReport<F>> {
    local_complexity_over(&[sf], db, s)
}

/// Like [`local_complexity`], pooling state occupation over several fields.
pub fn local_complexity_over<F: Scalar>(fields: &[&StateField], db: &ConeDatabase, s: &StateSet) -> Result<ComplexityReport<F>> {
    if db.layout != s.layout || db.alphabet != s.alphabet {
        return Err(Error::Mismatch("database and state set layouts differ".into()));
    }
    let mut occupation: Vec<BTreeMap<StateId, u64>> = vec![BTreeMap::new(); s.classes.len()];
    for sf in fields {
        if sf.vertex_count() != s.layout.vertex_count() {
            return Err(Error::Mismatch("state field width differs from layout".into()));
        }
        for (_, v, label) in sf.iter() {
            if let Some(id) = label {
                *occupation[s.layout.class_of(v)].entry(id).or_insert(0) += 1;
            }
        }
    }
    if occupation.iter().all(|o| o.is_empty()) {
        return Err(Error::NoData("no labeled points".into()));
    }
    let classes = s
        .classes
        .iter()
        .enumerate()
        .map(|(c, cs)| {
            let counts = &db.classes[c];
            let weights = cs
                .states
                .iter()
                .map(|st| st.members.iter().filter_map(|m| counts.pasts.get(m)).map(|e| e.total).sum::<u64>());
            let joint: BTreeMap<(&ConfigKey, &ConfigKey), u64> = counts
                .pasts
                .iter()
                .flat_map(|(p, e)| e.futures.iter().map(move |(f, &n)| ((p, f), n)))
                .collect();
            let futures: BTreeSet<&ConfigKey> = joint.keys().map(|(_, f)| *f).collect();
            let total = counts.total();
            Ok(ClassComplexity {
                class: c,
                vertices: s.layout.classes[c].vertices.clone(),
                c_bits: entropy(occupation[c].values().copied()),
                state_entropy_bits: entropy(weights),
                predictive_info_lower_bits: if total == 0 { F::zero() } else { mutual_information_sparse(&joint)? },
                predictive_info_bias_bits: mi_bias_bits(counts.pasts.len(), futures.len(), total),
                n_samples: occupation[c].values().sum(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComplexityReport { classes })
}

/// Plug-in `H[S | L-]` over labeled points of `f`, with pasts keyed per class.
/// Zero whenever `sf` was produced by labeling `f`.
pub fn state_given_past_entropy<F: Scalar>(sf: &StateField, f: &FieldSeries, layout: &ConeLayout, alphabet: u16) -> Result<F> {
    let mut joint: BTreeMap<(StateId, (usize, ConfigKey)), u64> = BTreeMap::new();
    let mut buf = Vec::new();
    for (t, v, label) in sf.iter() {
        let Some(id) = label else { continue };
        let cones = &layout.cones[v];
        if read_offsets(f, &cones.past, t as i64, &mut buf) {
            let key = layout.past_codec(cones.class, alphabet).encode(&buf);
            *joint.entry((id, (cones.class, key))).or_insert(0) += 1;
        }
    }
    conditional_entropy_sparse(&joint)
}

/// Parent vertices of each vertex: itself and its neighbors, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParentsSpec {
    pub parents: Vec<Vec<Vertex>>,
}

impl ParentsSpec {
    pub fn from_graph(g: &Graph) -> Self {
        let parents = (0..g.vertex_count())
            .map(|v| {
                let mut p: Vec<Vertex> = g.neighbors(v).to_vec();
                p.push(v);
                p.sort_unstable();
                p
            })
            .collect();
        ParentsSpec { parents }
    }
}

fn states_at(sf: &StateField, t: i64, vertices: &[Vertex]) -> Option<Vec<StateId>> {
    vertices.iter().map(|&u| sf.at(t, u)).collect()
}

/// `I[S(v,t); S(v,t-k) | v, parents]` with parents one step earlier.
pub fn temporal_markov_test(sf: &StateField, parents: &ParentsSpec, depth_k: usize, cfg: &CmiConfig) -> Result<CmiReport> {
    if depth_k < 2 {
        return Err(Error::Params("lag must be at least 2".into()));
    }
    if parents.parents.len() != sf.vertex_count() {
        return Err(Error::Mismatch("parents spec width differs from state field".into()));
    }
    let mut joint: BTreeMap<(StateId, StateId, (Vertex, Vec<StateId>)), u64> = BTreeMap::new();
    for t in depth_k..sf.steps() {
        let t = t as i64;
        for (v, ps) in parents.parents.iter().enumerate() {
            let (Some(x), Some(y), Some(z)) = (sf.at(t, v), sf.at(t - depth_k as i64, v), states_at(sf, t - 1, ps)) else {
                continue;
            };
            *joint.entry((x, y, (v, z))).or_insert(0) += 1;
        }
    }
    cmi_report(&joint, cfg)
}

/// Remote point compared against a vertex's state: the lowest-numbered vertex
/// at graph distance `distance`, `dt` steps away (`dt <= 0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub distance: usize,
    pub dt: i64,
}

impl Default for Probe {
    fn default() -> Self {
        Probe { distance: 2, dt: 0 }
    }
}

/// `I[S(v,t); S(probe) | v, parents, same-time neighbors]`.
pub fn markov_field_test(sf: &StateField, g: &Graph, probe: Probe, cfg: &CmiConfig) -> Result<CmiReport> {
    if probe.distance < 2 || probe.dt > 0 {
        return Err(Error::Params("probe must lie outside the boundary: distance >= 2 and dt <= 0".into()));
    }
    if g.vertex_count() != sf.vertex_count() {
        return Err(Error::Mismatch("graph and state field differ in size".into()));
    }
    let parents = ParentsSpec::from_graph(g);
    let probes: Vec<Option<Vertex>> = (0..g.vertex_count())
        .map(|v| g.bfs_limited(v, probe.distance).iter().position(|d| *d == Some(probe.distance)))
        .collect();
    let mut joint: BTreeMap<(StateId, StateId, (Vertex, Vec<StateId>, Vec<StateId>)), u64> = BTreeMap::new();
    for t in 0..sf.steps() as i64 {
        for v in 0..g.vertex_count() {
            let Some(w) = probes[v] else { continue };
            let (Some(x), Some(y)) = (sf.at(t, v), sf.at(t + probe.dt, w)) else {
                continue;
            };
            let (Some(before), Some(beside)) = (states_at(sf, t - 1, &parents.parents[v]), states_at(sf, t, g.neighbors(v))) else {
                continue;
            };
            *joint.entry((x, y, (v, before, beside))).or_insert(0) += 1;
        }
    }
    cmi_report(&joint, cfg)
}
