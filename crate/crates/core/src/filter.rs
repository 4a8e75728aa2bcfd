//! Fringe-driven state transitions and the set-valued recursive filter.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{fringe_template, Move, Offset, Point};
use crate::config::{ConeConfig, Symbol};
use crate::error::{Error, Result};
use crate::field::FieldSeries;
use crate::graph::{Graph, Vertex};
use crate::label::StateField;
use crate::layout::ConeLayout;
use crate::reconstruct::{StateId, StateSet};
use crate::stats::read_offsets;

/// Kind of move a transition belongs to. Spatial moves are identified by the
/// destination's slot in the source's future cone, which is shared by all
/// members of a pooled class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Link {
    Temporal { class: usize },
    Spatial { class: usize, slot: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionKey {
    pub link: Link,
    pub state: StateId,
    pub fringe: ConeConfig,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConflictEvent {
    pub key: TransitionKey,
    /// Successors recorded before this observation.
    pub previous: BTreeSet<StateId>,
    pub observed: StateId,
    pub source: Point,
}

/// One kind of move out of a vertex, with its fringe in destination slot order.
#[derive(Clone, Debug, PartialEq, Eq)]
struct MoveGeom {
    destination: Vertex,
    link: Link,
    /// Fringe offsets relative to the destination time.
    fringe: Vec<Offset>,
}

/// Temporal and spatial moves of every vertex under one layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoveGeometry {
    temporal: Vec<MoveGeom>,
    spatial: Vec<Vec<MoveGeom>>,
}

impl MoveGeometry {
    pub fn new(g: &Graph, layout: &ConeLayout) -> Result<Self> {
        if g.vertex_count() != layout.vertex_count() {
            return Err(Error::Mismatch("graph and layout differ in size".into()));
        }
        let p = layout.params;
        let aligned = |dest: Vertex, offs: Vec<Offset>| -> Vec<Offset> {
            let slots = &layout.cones[dest].past;
            let mut offs = offs;
            offs.sort_by_key(|o| slots.iter().position(|s| s == o).expect("fringe lies in destination past"));
            offs
        };
        let mut temporal = Vec::with_capacity(g.vertex_count());
        let mut spatial = Vec::with_capacity(g.vertex_count());
        for v in 0..g.vertex_count() {
            let class = layout.class_of(v);
            let ft = fringe_template(g, v, &p, Move::Temporal)?;
            temporal.push(MoveGeom {
                destination: v,
                link: Link::Temporal { class },
                fringe: aligned(v, ft.offsets),
            });
            let mut out = Vec::new();
            for &u in g.neighbors(v) {
                let fs = fringe_template(g, v, &p, Move::Spatial(u))?;
                let slot = layout.cones[v]
                    .future
                    .iter()
                    .position(|o| *o == Offset::new(u, 1))
                    .ok_or_else(|| Error::Params("neighbor missing from future cone".into()))?;
                out.push(MoveGeom {
                    destination: u,
                    link: Link::Spatial { class, slot },
                    fringe: aligned(u, fs.offsets),
                });
            }
            spatial.push(out);
        }
        Ok(MoveGeometry { temporal, spatial })
    }

    fn find(&self, from: Point, to: Point) -> Result<&MoveGeom> {
        if to.time < from.time {
            return Err(Error::Path(format!("move {from} -> {to} goes backwards in time")));
        }
        if to.time == from.time + 1 && to.vertex == from.vertex {
            return Ok(&self.temporal[from.vertex]);
        }
        if to.time == from.time {
            if let Some(m) = self.spatial[from.vertex].iter().find(|m| m.destination == to.vertex) {
                return Ok(m);
            }
        }
        Err(Error::Path(format!("{from} -> {to} is not a single temporal or spatial move")))
    }
}

fn read_fringe(f: &FieldSeries, m: &MoveGeom, dest_time: i64, buf: &mut Vec<Symbol>) -> Option<ConeConfig> {
    read_offsets(f, &m.fringe, dest_time, buf).then(|| ConeConfig(buf.clone()))
}

/// Observed successor multisets keyed by `(link, source state, fringe)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransitionTable {
    pub entries: BTreeMap<TransitionKey, BTreeMap<StateId, u64>>,
    pub conflicts: Vec<ConflictEvent>,
}

impl TransitionTable {
    pub fn record(&mut self, key: TransitionKey, to: StateId, source: Point) {
        let succ = self.entries.entry(key.clone()).or_default();
        if !succ.is_empty() && !succ.contains_key(&to) {
            self.conflicts.push(ConflictEvent {
                key,
                previous: succ.keys().copied().collect(),
                observed: to,
                source,
            });
        }
        *succ.entry(to).or_insert(0) += 1;
    }

    /// Adds every labeled adjacent pair of `sf` whose fringe lies inside `f`.
    pub fn add(&mut self, sf: &StateField, f: &FieldSeries, geom: &MoveGeometry) -> Result<()> {
        if sf.steps() != f.steps() || sf.vertex_count() != f.vertex_count() || geom.temporal.len() != f.vertex_count() {
            return Err(Error::Mismatch("state field, field and geometry differ in shape".into()));
        }
        let mut buf = Vec::new();
        for t in 0..f.steps() as i64 {
            for v in 0..f.vertex_count() {
                let Some(state) = sf.at(t, v) else { continue };
                let moves = std::iter::once((&geom.temporal[v], t + 1)).chain(geom.spatial[v].iter().map(|m| (m, t)));
                for (m, dt) in moves {
                    let Some(to) = sf.at(dt, m.destination) else { continue };
                    if let Some(fringe) = read_fringe(f, m, dt, &mut buf) {
                        self.record(TransitionKey { link: m.link, state, fringe }, to, Point::new(v, t));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn successors(&self, key: &TransitionKey) -> Option<&BTreeMap<StateId, u64>> {
        self.entries.get(key)
    }

    pub fn key_count(&self) -> usize {
        self.entries.len()
    }

    pub fn temporal_key_count(&self) -> usize {
        self.entries.keys().filter(|k| matches!(k.link, Link::Temporal { .. })).count()
    }

    pub fn conflicting_keys(&self) -> usize {
        self.entries.values().filter(|s| s.len() > 1).count()
    }

    pub fn conflict_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.conflicting_keys() as f64 / self.entries.len() as f64
        }
    }
}

/// Transitions observed in one labeled field.
pub fn learn_transitions(sf: &StateField, f: &FieldSeries, g: &Graph, layout: &ConeLayout) -> Result<TransitionTable> {
    let geom = MoveGeometry::new(g, layout)?;
    let mut tt = TransitionTable::default();
    tt.add(sf, f, &geom)?;
    Ok(tt)
}

/// Candidate states per point; an empty set marks a contradiction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateEstimate {
    vertex_count: usize,
    cells: Vec<Vec<StateId>>,
    /// Observable moves whose fringe was seen in training, and all observable moves.
    coverage: (u64, u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub singleton_fraction: f64,
    pub contradiction_count: usize,
    pub coverage: f64,
}

impl StateEstimate {
    pub fn steps(&self) -> usize {
        self.cells.len().checked_div(self.vertex_count).unwrap_or(0)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn get(&self, t: usize, v: Vertex) -> &[StateId] {
        &self.cells[t * self.vertex_count + v]
    }

    /// Hides the estimate at a point by widening it to `candidates`.
    pub fn set(&mut self, t: usize, v: Vertex, candidates: Vec<StateId>) {
        self.cells[t * self.vertex_count + v] = candidates;
    }

    pub fn is_contradiction(&self, t: usize, v: Vertex) -> bool {
        self.get(t, v).is_empty()
    }

    pub fn singleton(&self, t: usize, v: Vertex) -> Option<StateId> {
        match self.get(t, v) {
            [s] => Some(*s),
            _ => None,
        }
    }

    pub fn summary(&self) -> FilterSummary {
        let n = self.cells.len().max(1) as f64;
        FilterSummary {
            singleton_fraction: self.cells.iter().filter(|c| c.len() == 1).count() as f64 / n,
            contradiction_count: self.cells.iter().filter(|c| c.is_empty()).count(),
            coverage: if self.coverage.1 == 0 { 1.0 } else { self.coverage.0 as f64 / self.coverage.1 as f64 },
        }
    }

    /// One row per time step; each point is `k:id1,id2,...` or `!`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in 0..self.steps() {
            for v in 0..self.vertex_count {
                if v > 0 {
                    out.push(' ');
                }
                let c = self.get(t, v);
                if c.is_empty() {
                    out.push('!');
                } else {
                    write!(out, "{}:", c.len()).unwrap();
                    for (i, s) in c.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        write!(out, "{s}").unwrap();
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Candidate sets from direct observation: every state owning a past that
/// agrees with the observed cells of the point's past cone. A point whose
/// whole past is observed thus gets its labeled state; a truncated past may
/// leave several. Observed cells matching no known past mark a contradiction.
pub fn initial_estimate(f: &FieldSeries, s: &StateSet) -> Result<StateEstimate> {
    let layout = &s.layout;
    if f.vertex_count() != layout.vertex_count() || f.alphabet() != s.alphabet {
        return Err(Error::Mismatch("field does not match the state set".into()));
    }
    let decoded: Vec<Vec<(StateId, Vec<Symbol>)>> = s
        .classes
        .iter()
        .enumerate()
        .map(|(c, cs)| {
            let pc = s.past_codec(c);
            cs.states
                .iter()
                .flat_map(|st| st.members.iter().map(move |m| (st.id, m)))
                .map(|(id, m)| (id, pc.decode(m).0))
                .collect()
        })
        .collect();
    let n = layout.vertex_count();
    let mut cells = Vec::with_capacity(f.steps() * n);
    let mut seen: Vec<Option<Symbol>> = Vec::new();
    for t in 0..f.steps() as i64 {
        for v in 0..n {
            let cones = &layout.cones[v];
            seen.clear();
            seen.extend(cones.past.iter().map(|o| f.at(t + o.dt, o.vertex)));
            let mut cand: BTreeSet<StateId> = BTreeSet::new();
            for (id, past) in &decoded[cones.class] {
                if seen.iter().zip(past).all(|(o, x)| o.is_none_or(|o| o == *x)) {
                    cand.insert(*id);
                }
            }
            cells.push(cand.into_iter().collect());
        }
    }
    Ok(StateEstimate {
        vertex_count: n,
        cells,
        coverage: (0, 0),
    })
}

/// A move between two points with its observed fringe.
#[derive(Clone, Debug)]
struct Constraint {
    src: usize,
    dst: usize,
    link: Link,
    fringe: ConeConfig,
}

fn constraints(f: &FieldSeries, geom: &MoveGeometry) -> Vec<Constraint> {
    let n = f.vertex_count();
    let steps = f.steps() as i64;
    let mut out = Vec::new();
    let mut buf = Vec::new();
    for t in 0..steps {
        for v in 0..n {
            let src = t as usize * n + v;
            if t + 1 < steps {
                let m = &geom.temporal[v];
                if let Some(fringe) = read_fringe(f, m, t + 1, &mut buf) {
                    out.push(Constraint { src, dst: src + n, link: m.link, fringe });
                }
            }
            for m in &geom.spatial[v] {
                if let Some(fringe) = read_fringe(f, m, t, &mut buf) {
                    out.push(Constraint { src, dst: t as usize * n + m.destination, link: m.link, fringe });
                }
            }
        }
    }
    out
}

/// Narrowed `(source, destination)` sets implied by one constraint.
fn narrow(tt: &TransitionTable, c: &Constraint, src: &[StateId], dst: &[StateId]) -> (Vec<StateId>, Vec<StateId>) {
    let succ: Vec<Option<&BTreeMap<StateId, u64>>> = src
        .iter()
        .map(|&state| {
            tt.successors(&TransitionKey {
                link: c.link,
                state,
                fringe: c.fringe.clone(),
            })
        })
        .collect();
    let dst: Vec<StateId> = if succ.iter().all(Option::is_some) {
        dst.iter()
            .copied()
            .filter(|d| succ.iter().any(|s| s.is_some_and(|s| s.contains_key(d))))
            .collect()
    } else {
        dst.to_vec()
    };
    let src = src
        .iter()
        .zip(&succ)
        .filter(|(_, s)| s.is_none_or(|s| dst.iter().any(|d| s.contains_key(d))))
        .map(|(&x, _)| x)
        .collect();
    (src, dst)
}

fn covered(tt: &TransitionTable, cons: &[Constraint]) -> (u64, u64) {
    let seen: BTreeSet<(Link, &ConeConfig)> = tt.entries.keys().map(|k| (k.link, &k.fringe)).collect();
    let hit = cons.iter().filter(|c| seen.contains(&(c.link, &c.fringe))).count();
    (hit as u64, cons.len() as u64)
}

/// Runs constraint propagation from `est` to its fixed point, one point at a
/// time from a worklist. Temporal constraints of a point are applied before
/// spatial ones. Contradicted points constrain nothing.
pub fn propagate(mut est: StateEstimate, f: &FieldSeries, tt: &TransitionTable, geom: &MoveGeometry) -> Result<StateEstimate> {
    if est.cells.len() != f.steps() * f.vertex_count() {
        return Err(Error::Mismatch("estimate does not match field".into()));
    }
    let cons = constraints(f, geom);
    est.coverage = covered(tt, &cons);
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); est.cells.len()];
    for (i, c) in cons.iter().enumerate() {
        touching[c.src].push(i);
        touching[c.dst].push(i);
    }
    for list in &mut touching {
        list.sort_by_key(|&i| (!matches!(cons[i].link, Link::Temporal { .. }), i));
    }
    let mut queued = vec![true; est.cells.len()];
    let mut work: VecDeque<usize> = (0..est.cells.len()).collect();
    while let Some(p) = work.pop_front() {
        queued[p] = false;
        for &i in &touching[p] {
            let c = &cons[i];
            if est.cells[c.src].is_empty() || est.cells[c.dst].is_empty() {
                continue;
            }
            let (s, d) = narrow(tt, c, &est.cells[c.src], &est.cells[c.dst]);
            for (idx, new) in [(c.src, s), (c.dst, d)] {
                if new.len() != est.cells[idx].len() {
                    est.cells[idx] = new;
                    if !queued[idx] {
                        queued[idx] = true;
                        work.push_back(idx);
                    }
                }
            }
        }
    }
    Ok(est)
}

/// Same fixed point as [`propagate`], computed in synchronous rounds with
/// points updated in parallel.
pub fn propagate_parallel(mut est: StateEstimate, f: &FieldSeries, tt: &TransitionTable, geom: &MoveGeometry) -> Result<StateEstimate> {
    if est.cells.len() != f.steps() * f.vertex_count() {
        return Err(Error::Mismatch("estimate does not match field".into()));
    }
    let cons = constraints(f, geom);
    est.coverage = covered(tt, &cons);
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); est.cells.len()];
    for (i, c) in cons.iter().enumerate() {
        touching[c.src].push(i);
        touching[c.dst].push(i);
    }
    loop {
        let prev = &est.cells;
        let next: Vec<Vec<StateId>> = (0..prev.len())
            .into_par_iter()
            .map(|p| {
                let mut cur = prev[p].clone();
                for &i in &touching[p] {
                    let c = &cons[i];
                    if cur.is_empty() {
                        break;
                    }
                    if prev[c.src].is_empty() || prev[c.dst].is_empty() {
                        continue;
                    }
                    let (s, d) = narrow(tt, c, &prev[c.src], &prev[c.dst]);
                    let mine = if c.src == p { s } else { d };
                    cur.retain(|x| mine.contains(x));
                }
                cur
            })
            .collect();
        if next == est.cells {
            return Ok(est);
        }
        est.cells = next;
    }
}

/// Initial estimate followed by propagation.
pub fn recursive_filter(f: &FieldSeries, s: &StateSet, tt: &TransitionTable, g: &Graph) -> Result<StateEstimate> {
    let geom = MoveGeometry::new(g, &s.layout)?;
    propagate(initial_estimate(f, s)?, f, tt, &geom)
}

/// Space-time path as a list of points, each one move after the previous.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSpec {
    pub waypoints: Vec<Point>,
}

impl PathSpec {
    pub fn start(&self) -> Option<Point> {
        self.waypoints.first().copied()
    }

    pub fn end(&self) -> Option<Point> {
        self.waypoints.last().copied()
    }
}

/// State reached by applying the path's fringes from `start_state`; `None`
/// when a fringe leaves the data or a key is unseen or nondeterministic.
pub fn follow_path(tt: &TransitionTable, geom: &MoveGeometry, f: &FieldSeries, start_state: StateId, path: &PathSpec) -> Result<Option<StateId>> {
    let mut state = start_state;
    let mut buf = Vec::new();
    let mut evaluable = true;
    for w in path.waypoints.windows(2) {
        let m = geom.find(w[0], w[1])?;
        if !evaluable {
            continue;
        }
        let Some(fringe) = read_fringe(f, m, w[1].time, &mut buf) else {
            evaluable = false;
            continue;
        };
        match tt.successors(&TransitionKey { link: m.link, state, fringe }) {
            Some(succ) if succ.len() == 1 => state = *succ.keys().next().unwrap(),
            _ => evaluable = false,
        }
    }
    Ok(evaluable.then_some(state))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub samples: usize,
    pub evaluated: usize,
    pub skipped: usize,
    pub violations: usize,
}

/// Applies both paths of each sample from the labeled start state and counts
/// disagreeing endpoints.
pub fn path_independence_check(
    tt: &TransitionTable,
    geom: &MoveGeometry,
    samples: &[(PathSpec, PathSpec)],
    sf: &StateField,
    f: &FieldSeries,
) -> Result<PathReport> {
    let mut r = PathReport {
        samples: samples.len(),
        ..Default::default()
    };
    for (a, b) in samples {
        let (Some(start), Some(end)) = (a.start(), a.end()) else {
            return Err(Error::Path("empty path".into()));
        };
        if b.start() != Some(start) || b.end() != Some(end) {
            return Err(Error::Path(format!("paths of a sample must share endpoints {start} and {end}")));
        }
        let outcome = match sf.at(start.time, start.vertex) {
            Some(s0) => (follow_path(tt, geom, f, s0, a)?, follow_path(tt, geom, f, s0, b)?),
            None => {
                // Still validate both paths.
                follow_path(tt, geom, f, StateId(0), a)?;
                follow_path(tt, geom, f, StateId(0), b)?;
                (None, None)
            }
        };
        match outcome {
            (Some(x), Some(y)) => {
                r.evaluated += 1;
                if x != y {
                    r.violations += 1;
                }
            }
            _ => r.skipped += 1,
        }
    }
    Ok(r)
}

/// Random pairs of paths between shared endpoints. Each path interleaves the
/// temporal steps with spatial steps along a shortest route at random; the
/// second path may also take a detour to a neighbor and back.
pub fn random_path_pairs(g: &Graph, steps: usize, lo: usize, count: usize, max_dt: usize, seed: u64) -> Result<Vec<(PathSpec, PathSpec)>> {
    if g.vertex_count() == 0 || max_dt == 0 || lo + max_dt >= steps {
        return Err(Error::Params("no room for paths in the requested window".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let build = |rng: &mut ChaCha8Rng, start: Point, route: &[Vertex], dt: usize, detour: bool| -> Vec<Point> {
        // `true` marks the next spatial step of the route, `false` a time step.
        let mut order: Vec<bool> = std::iter::repeat_n(true, route.len() - 1).chain(std::iter::repeat_n(false, dt)).collect();
        order.shuffle(rng);
        let detour_at = rng.random_range(0..=order.len());
        let mut pts = vec![start];
        let mut cur = start;
        let mut next = route[1..].iter();
        for (i, spatial) in order.into_iter().enumerate() {
            if detour && i == detour_at {
                let nb = g.neighbors(cur.vertex);
                if !nb.is_empty() {
                    pts.push(Point::new(nb[rng.random_range(0..nb.len())], cur.time));
                    pts.push(cur);
                }
            }
            cur = if spatial {
                Point::new(*next.next().expect("route has a vertex per spatial step"), cur.time)
            } else {
                Point::new(cur.vertex, cur.time + 1)
            };
            pts.push(cur);
        }
        pts
    };
    while out.len() < count {
        let dt = rng.random_range(1..=max_dt);
        let t0 = rng.random_range(lo..steps - dt) as i64;
        let v = rng.random_range(0..g.vertex_count());
        let within = g.ball(v, dt);
        let w = within[rng.random_range(0..within.len())];
        let route = g.shortest_path(v, w).expect("ball members are reachable");
        let start = Point::new(v, t0);
        let a = build(&mut rng, start, &route, dt, false);
        let b = build(&mut rng, start, &route, dt, true);
        out.push((PathSpec { waypoints: a }, PathSpec { waypoints: b }));
    }
    Ok(out)
}
