//! Forecasts from local causal states, forecast scoring, and patch checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analysis::{cmi_report, CmiConfig, CmiReport};
use crate::cone::{cone_template, ConeParams, Direction, Offset};
use crate::config::{ConeConfig, ConfigCodec, ConfigKey, Symbol};
use crate::distribution::ProbVector;
use crate::error::{Error, Result};
use crate::field::FieldSeries;
use crate::graph::{Graph, Vertex};
use crate::label::StateField;
use crate::oracle::{conditionals, exact_cone_joint, partition_by_conditional};
use crate::reconstruct::{StateId, StateSet};
use crate::rules::LocalRule;
use crate::scalar::Scalar;
use crate::stats::read_offsets;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictMode {
    FullCone,
    NextStep,
}

#[derive(Clone, Debug)]
pub struct Predictor {
    pub state_set: StateSet,
    pub mode: PredictMode,
    /// Per class, the future slot holding `<v, t+1>`.
    next_slot: Vec<usize>,
}

impl Predictor {
    pub fn new(state_set: StateSet, mode: PredictMode) -> Result<Self> {
        let layout = &state_set.layout;
        let mut next_slot = Vec::with_capacity(layout.classes.len());
        for class in &layout.classes {
            let slot_of = |v: Vertex| layout.cones[v].future.iter().position(|o| *o == Offset::new(v, 1));
            let first = slot_of(class.vertices[0]);
            if class.vertices.iter().any(|&v| slot_of(v) != first) {
                return Err(Error::Params("next-step slot differs within a pooled class".into()));
            }
            match first {
                Some(i) => next_slot.push(i),
                None if mode == PredictMode::NextStep => {
                    return Err(Error::Params("future cone lacks the next-step offset".into()))
                }
                None => next_slot.push(usize::MAX),
            }
        }
        Ok(Predictor {
            state_set,
            mode,
            next_slot,
        })
    }

    pub fn params(&self) -> ConeParams {
        self.state_set.layout.params
    }

    /// Codec of the predicted variable in `class`.
    pub fn outcome_codec(&self, class: usize) -> ConfigCodec {
        match self.mode {
            PredictMode::FullCone => self.state_set.future_codec(class),
            PredictMode::NextStep => ConfigCodec::new(self.state_set.alphabet, 1),
        }
    }

    /// Outcome counts of a state, in this predictor's mode.
    pub fn outcome_counts(&self, class: usize, id: StateId) -> Result<BTreeMap<ConfigKey, u64>> {
        let state = self.state_set.classes[class]
            .get(id)
            .ok_or_else(|| Error::NoData(format!("no state {id} in class {class}")))?;
        match self.mode {
            PredictMode::FullCone => Ok(state.futures.clone()),
            PredictMode::NextStep => {
                let fc = self.state_set.future_codec(class);
                let oc = self.outcome_codec(class);
                let slot = self.next_slot[class];
                let mut out = BTreeMap::new();
                for (k, &n) in &state.futures {
                    let s = fc.decode(k).0[slot];
                    *out.entry(oc.encode(&[s])).or_insert(0) += n;
                }
                Ok(out)
            }
        }
    }

    /// Distribution predicted for a past configuration of `class`.
    pub fn predict_distribution<F: Scalar>(&self, past: &ConeConfig, class: usize) -> Result<ProbVector<F>> {
        if class >= self.state_set.classes.len() {
            return Err(Error::Params(format!("no class {class}")));
        }
        let key = self.state_set.past_codec(class).encode(past.symbols());
        let id = self.state_set.classes[class]
            .state_of(&key)
            .ok_or_else(|| Error::NoData(format!("past {past} is not in any state of class {class}")))?;
        ProbVector::from_counts(&self.outcome_counts(class, id)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub log_loss_bits_per_point: f64,
    pub accuracy: f64,
    pub coverage: f64,
    pub n_points: u64,
    /// Points whose realized outcome was unseen in its state and was scored
    /// with add-one smoothing.
    pub smoothing_count: u64,
}

impl EvalReport {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.log_loss_bits_per_point, self.accuracy, self.coverage, self.n_points
        )
    }
}

/// Scores the predictor on every point of `heldout` whose past and outcome
/// lie inside the data.
pub fn evaluate_predictor(pred: &Predictor, heldout: &FieldSeries) -> Result<EvalReport> {
    let s = &pred.state_set;
    if heldout.vertex_count() != s.layout.vertex_count() || heldout.alphabet() != s.alphabet {
        return Err(Error::Mismatch("held-out field does not match the state set".into()));
    }
    // Outcome counts, total and argmax, cached per (class, state).
    struct Scored {
        counts: BTreeMap<ConfigKey, u64>,
        total: u64,
        best: Option<ConfigKey>,
    }
    let mut cache: BTreeMap<(usize, StateId), Scored> = BTreeMap::new();
    let (mut candidates, mut covered, mut correct, mut smoothed) = (0u64, 0u64, 0u64, 0u64);
    let mut loss = 0.0f64;
    let (mut pbuf, mut fbuf) = (Vec::new(), Vec::new());
    for v in 0..s.layout.vertex_count() {
        let cones = &s.layout.cones[v];
        let class = cones.class;
        let pc = s.past_codec(class);
        let oc = pred.outcome_codec(class);
        let outcome_space = (s.alphabet as f64).powi(oc.len as i32);
        let outcome_offsets: Vec<Offset> = match pred.mode {
            PredictMode::FullCone => cones.future.clone(),
            PredictMode::NextStep => vec![Offset::new(v, 1)],
        };
        for t in 0..heldout.steps() as i64 {
            if !read_offsets(heldout, &cones.past, t, &mut pbuf) || !read_offsets(heldout, &outcome_offsets, t, &mut fbuf) {
                continue;
            }
            candidates += 1;
            let Some(id) = s.classes[class].state_of(&pc.encode(&pbuf)) else {
                continue;
            };
            let entry = match cache.entry((class, id)) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    let counts = pred.outcome_counts(class, id)?;
                    let total = counts.values().sum();
                    let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| k.clone());
                    e.insert(Scored { counts, total, best })
                }
            };
            if entry.total == 0 {
                return Err(Error::NoData(format!("state {id} of class {class} has no future counts")));
            }
            covered += 1;
            let outcome = oc.encode(&fbuf);
            let n = entry.counts.get(&outcome).copied().unwrap_or(0);
            let q = if n > 0 {
                n as f64 / entry.total as f64
            } else {
                smoothed += 1;
                1.0 / (entry.total as f64 + outcome_space)
            };
            loss -= q.log2();
            if entry.best.as_ref() == Some(&outcome) {
                correct += 1;
            }
        }
    }
    if covered == 0 {
        return Err(Error::NoData("no held-out point has a known state".into()));
    }
    Ok(EvalReport {
        log_loss_bits_per_point: loss / covered as f64,
        accuracy: correct as f64 / covered as f64,
        coverage: covered as f64 / candidates as f64,
        n_points: covered,
        smoothing_count: smoothed,
    })
}

/// States of a connected vertex set at one time, in vertex order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatchKey(pub Vec<(Vertex, StateId)>);

/// Union past and future cones of a patch, sorted by time then vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchCones {
    pub vertices: Vec<Vertex>,
    pub past: Vec<Offset>,
    pub future: Vec<Offset>,
}

impl PatchCones {
    pub fn new(g: &Graph, patch: &[Vertex], p: &ConeParams) -> Result<Self> {
        let mut vertices = patch.to_vec();
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.is_empty() || vertices.iter().any(|&v| v >= g.vertex_count()) {
            return Err(Error::Params("patch must name existing vertices".into()));
        }
        if !g.is_connected_subset(&vertices) {
            return Err(Error::Params("patch is not connected".into()));
        }
        let union = |dir| -> Vec<Offset> {
            let set: BTreeSet<Offset> = vertices.iter().flat_map(|&v| cone_template(g, v, p, dir).offsets).collect();
            set.into_iter().collect()
        };
        Ok(PatchCones {
            past: union(Direction::Past),
            future: union(Direction::Future),
            vertices,
        })
    }

    /// Patch key at time `t`, if every member is labeled.
    pub fn key(&self, sf: &StateField, t: usize) -> Option<PatchKey> {
        self.vertices
            .iter()
            .map(|&v| sf.get(t, v).map(|s| (v, s)))
            .collect::<Option<Vec<_>>>()
            .map(PatchKey)
    }
}

type PatchJoint = BTreeMap<(Vec<Symbol>, Vec<Symbol>, PatchKey), u64>;

/// Accumulates `(patch past, patch future, patch key)` samples over series.
#[derive(Clone, Debug)]
pub struct PatchTally {
    pub cones: PatchCones,
    pub joint: PatchJoint,
}

impl PatchTally {
    pub fn new(cones: PatchCones) -> Self {
        PatchTally {
            cones,
            joint: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, sf: &StateField, f: &FieldSeries) -> Result<()> {
        if sf.steps() != f.steps() || sf.vertex_count() != f.vertex_count() {
            return Err(Error::Mismatch("state field and field differ in shape".into()));
        }
        let (mut pb, mut fb) = (Vec::new(), Vec::new());
        for t in 0..f.steps() {
            let Some(key) = self.cones.key(sf, t) else { continue };
            if read_offsets(f, &self.cones.past, t as i64, &mut pb) && read_offsets(f, &self.cones.future, t as i64, &mut fb) {
                *self.joint.entry((pb.clone(), fb.clone(), key)).or_insert(0) += 1;
            }
        }
        Ok(())
    }

    /// Estimated `I[patch past; patch future | patch key]`.
    pub fn sufficiency(&self, cfg: &CmiConfig) -> Result<CmiReport> {
        cmi_report(&self.joint, cfg)
    }

    /// Counts patch keys whose observed pasts fall in more than one block of
    /// `partition` (patch past -> block index).
    pub fn function_violations(&self, partition: &BTreeMap<Vec<Symbol>, usize>) -> PatchFunctionReport {
        let mut blocks: BTreeMap<&PatchKey, BTreeSet<usize>> = BTreeMap::new();
        let mut unmapped = 0;
        for (past, _, key) in self.joint.keys() {
            match partition.get(past) {
                Some(&b) => {
                    blocks.entry(key).or_default().insert(b);
                }
                None => unmapped += 1,
            }
        }
        PatchFunctionReport {
            keys: blocks.len(),
            violations: blocks.values().filter(|b| b.len() > 1).count(),
            unmapped_pasts: unmapped,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchFunctionReport {
    pub keys: usize,
    pub violations: usize,
    /// Observed pasts with zero probability under the oracle.
    pub unmapped_pasts: usize,
}

/// Conditional-independence check of a patch's past and future given its key.
pub fn patch_sufficiency_test(
    sf: &StateField,
    f: &FieldSeries,
    g: &Graph,
    patch: &[Vertex],
    p: &ConeParams,
    cfg: &CmiConfig,
) -> Result<CmiReport> {
    let mut tally = PatchTally::new(PatchCones::new(g, patch, p)?);
    tally.add(sf, f)?;
    tally.sufficiency(cfg)
}

/// Exact partition of patch pasts by their conditional patch-future law.
pub fn oracle_patch_partition(g: &Graph, rule: &LocalRule, initial: &[f64], cones: &PatchCones) -> Result<BTreeMap<Vec<Symbol>, usize>> {
    let joint = exact_cone_joint(g, rule, initial, &cones.past, &cones.future)?;
    Ok(partition_by_conditional(&conditionals(&joint)))
}
