//! Light-cone and fringe templates on a fixed graph.
//!
//! A past template at vertex `v` holds every `(u, -tau)` with
//! `0 <= tau < past_depth` and `dist(u, v) <= c * tau`; a future template holds
//! every `(u, tau)` with `1 <= tau <= future_depth` and `dist(v, u) <= c * tau`.
//! Offsets are kept in canonical order: time offset ascending, then vertex id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};

/// Space-time point `<vertex, time>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub vertex: Vertex,
    pub time: i64,
}

impl Point {
    pub fn new(vertex: Vertex, time: i64) -> Self {
        Point { vertex, time }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.vertex, self.time)
    }
}

/// Propagation speed and cone depths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConeParams {
    /// Graph hops per time step.
    pub speed_c: usize,
    /// Past time slices, counting the present slice.
    pub past_depth: usize,
    /// Future time slices, starting one step ahead.
    pub future_depth: usize,
}

impl ConeParams {
    pub fn new(speed_c: usize, past_depth: usize, future_depth: usize) -> Result<Self> {
        let p = ConeParams {
            speed_c,
            past_depth,
            future_depth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.speed_c == 0 || self.past_depth == 0 || self.future_depth == 0 {
            return Err(Error::Params(format!(
                "speed_c, past_depth and future_depth must all be >= 1 (got {}, {}, {})",
                self.speed_c, self.past_depth, self.future_depth
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Past,
    Future,
}

/// A point relative to an anchor: absolute vertex, relative time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Offset {
    pub vertex: Vertex,
    pub dt: i64,
}

impl Offset {
    pub fn new(vertex: Vertex, dt: i64) -> Self {
        Offset { vertex, dt }
    }

    fn key(&self) -> (i64, Vertex) {
        (self.dt, self.vertex)
    }
}

impl PartialOrd for Offset {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Offset {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeTemplate {
    pub anchor: Vertex,
    pub direction: Direction,
    pub offsets: Vec<Offset>,
}

impl ConeTemplate {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn contains(&self, o: Offset) -> bool {
        self.offsets.binary_search(&o).is_ok()
    }

    /// Number of offsets in each time slice, keyed by time offset.
    pub fn slice_sizes(&self) -> BTreeMap<i64, usize> {
        let mut m = BTreeMap::new();
        for o in &self.offsets {
            *m.entry(o.dt).or_insert(0) += 1;
        }
        m
    }
}

/// Builds the past or future light-cone template at `v`.
pub fn cone_template(g: &Graph, v: Vertex, p: &ConeParams, direction: Direction) -> ConeTemplate {
    let (taus, sign): (Vec<usize>, i64) = match direction {
        Direction::Past => ((0..p.past_depth).collect(), -1),
        Direction::Future => ((1..=p.future_depth).collect(), 1),
    };
    let max_tau = taus.iter().copied().max().unwrap_or(0);
    let dist = g.bfs_limited(v, p.speed_c.saturating_mul(max_tau));
    let mut offsets = Vec::new();
    for tau in taus {
        let reach = p.speed_c.saturating_mul(tau);
        for (u, d) in dist.iter().enumerate() {
            if matches!(d, Some(d) if *d <= reach) {
                offsets.push(Offset::new(u, sign * tau as i64));
            }
        }
    }
    offsets.sort();
    ConeTemplate {
        anchor: v,
        direction,
        offsets,
    }
}

/// Step between adjacent points: one step forward in time, or to a neighbor at equal time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    Temporal,
    Spatial(Vertex),
}

/// Past-cone points gained by a move, relative to the destination point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FringeTemplate {
    pub source: Vertex,
    pub destination: Vertex,
    pub step: Move,
    pub offsets: Vec<Offset>,
}

impl FringeTemplate {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Fringe for moving from `<v, t>` by `step`: destination past cone minus source past cone.
pub fn fringe_template(g: &Graph, v: Vertex, p: &ConeParams, step: Move) -> Result<FringeTemplate> {
    let source = cone_template(g, v, p, Direction::Past);
    let source_set: BTreeSet<Offset> = source.offsets.iter().copied().collect();
    // `shift` converts destination-relative time offsets to source-relative ones.
    let (destination, shift) = match step {
        Move::Temporal => (v, 1),
        Move::Spatial(u) => {
            if !g.has_edge(v, u) {
                return Err(Error::Path(format!("spatial move {v} -> {u}: not adjacent")));
            }
            (u, 0)
        }
    };
    let dest = cone_template(g, destination, p, Direction::Past);
    let offsets = dest
        .offsets
        .into_iter()
        .filter(|o| !source_set.contains(&Offset::new(o.vertex, o.dt + shift)))
        .collect();
    Ok(FringeTemplate {
        source: v,
        destination,
        step,
        offsets,
    })
}

/// Isomorphism-invariant description of a cone's shape plus one canonical
/// vertex ordering realizing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeShape {
    pub signature: String,
    /// Cone vertices in canonical order; `None` when the canonical search was
    /// abandoned and the signature is unique to the anchor.
    pub canonical_order: Option<Vec<Vertex>>,
}

impl ConeShape {
    /// Position of each vertex in the canonical order.
    pub fn rank(&self) -> Option<BTreeMap<Vertex, usize>> {
        self.canonical_order
            .as_ref()
            .map(|o| o.iter().enumerate().map(|(i, &v)| (v, i)).collect())
    }
}

/// Maximum number of labelings tried before falling back to a per-vertex signature.
pub const CANONICAL_SEARCH_BUDGET: usize = 40_320;

/// Shape signature of a single template.
pub fn cone_shape_signature(t: &ConeTemplate, g: &Graph) -> ConeShape {
    joint_cone_shape(g, t.anchor, &[t])
}

/// Shape signature of several templates anchored at the same vertex.
///
/// Two anchors get equal signatures iff some bijection between their cone
/// vertices maps anchor to anchor, preserves every vertex's set of
/// `(direction, time offset)` memberships, and preserves graph adjacency.
pub fn joint_cone_shape(g: &Graph, anchor: Vertex, templates: &[&ConeTemplate]) -> ConeShape {
    let mut labels: BTreeMap<Vertex, Vec<(u8, i64)>> = BTreeMap::new();
    labels.entry(anchor).or_default();
    for t in templates {
        let dir = match t.direction {
            Direction::Past => 0u8,
            Direction::Future => 1u8,
        };
        for o in &t.offsets {
            labels.entry(o.vertex).or_default().push((dir, o.dt));
        }
    }
    let nodes: Vec<Vertex> = labels.keys().copied().collect();
    let k = nodes.len();
    let initial: Vec<String> = nodes
        .iter()
        .map(|v| {
            let mut l = labels[v].clone();
            l.sort();
            format!("{}{:?}", if *v == anchor { "A" } else { "-" }, l)
        })
        .collect();
    let adj: Vec<Vec<bool>> = nodes
        .iter()
        .map(|&a| nodes.iter().map(|&b| g.has_edge(a, b)).collect())
        .collect();

    let colors = refine_colors(&initial, &adj);

    // Color classes in color order; labelings permute within classes.
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in colors.iter().enumerate() {
        classes.entry(c).or_default().push(i);
    }
    let classes: Vec<Vec<usize>> = classes.into_values().collect();
    let mut count: usize = 1;
    for c in &classes {
        for f in 2..=c.len() {
            count = count.saturating_mul(f);
        }
    }
    if count > CANONICAL_SEARCH_BUDGET {
        return ConeShape {
            signature: format!("vertex-{anchor}"),
            canonical_order: None,
        };
    }

    let n = g.vertex_count().max(1);
    let cyclic = |i: usize| (nodes[i] + n - anchor % n) % n;
    let mut best: Option<(Vec<bool>, Vec<usize>, Vec<usize>)> = None;
    let mut order = Vec::with_capacity(k);
    search_labelings(&classes, 0, &mut order, &mut |ord: &[usize]| {
        let mut bits = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for i in 0..k {
            for j in (i + 1)..k {
                bits.push(adj[ord[i]][ord[j]]);
            }
        }
        let tie: Vec<usize> = ord.iter().map(|&i| cyclic(i)).collect();
        let better = match &best {
            None => true,
            Some((b, t, _)) => (&bits, &tie) < (b, t),
        };
        if better {
            best = Some((bits, tie, ord.to_vec()));
        }
    });
    let (bits, _, ord) = best.expect("at least one labeling");

    let mut hasher = Sha256::new();
    for &i in &ord {
        hasher.update(initial[i].as_bytes());
        hasher.update(b";");
    }
    hasher.update(b"|");
    for b in bits {
        hasher.update([b as u8]);
    }
    let digest = hasher.finalize();
    let signature: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    ConeShape {
        signature,
        canonical_order: Some(ord.into_iter().map(|i| nodes[i]).collect()),
    }
}

/// Iterated neighborhood refinement; colors are ranks of sorted invariant keys.
fn refine_colors(initial: &[String], adj: &[Vec<bool>]) -> Vec<usize> {
    let rank = |keys: &[String]| -> Vec<usize> {
        let distinct: BTreeSet<&String> = keys.iter().collect();
        let index: BTreeMap<&String, usize> = distinct.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
        keys.iter().map(|k| index[k]).collect()
    };
    let mut colors = rank(initial);
    loop {
        let keys: Vec<String> = (0..colors.len())
            .map(|i| {
                let mut nb: Vec<usize> = (0..colors.len()).filter(|&j| adj[i][j]).map(|j| colors[j]).collect();
                nb.sort_unstable();
                format!("{:08}{:?}", colors[i], nb)
            })
            .collect();
        let next = rank(&keys);
        let before = colors.iter().collect::<BTreeSet<_>>().len();
        let after = next.iter().collect::<BTreeSet<_>>().len();
        colors = next;
        if after == before {
            return colors;
        }
    }
}

fn search_labelings(
    classes: &[Vec<usize>],
    depth: usize,
    order: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if depth == classes.len() {
        visit(order);
        return;
    }
    let mut members = classes[depth].clone();
    permute(&mut members, 0, &mut |perm: &[usize]| {
        let base = order.len();
        order.extend_from_slice(perm);
        search_labelings(classes, depth + 1, order, visit);
        order.truncate(base);
    });
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offs(v: &[(usize, i64)]) -> Vec<Offset> {
        v.iter().map(|&(u, t)| Offset::new(u, t)).collect()
    }

    #[test]
    fn ring_past_cone() {
        let g = Graph::ring(5).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let t = cone_template(&g, 0, &p, Direction::Past);
        assert_eq!(t.offsets, offs(&[(0, -1), (1, -1), (4, -1), (0, 0)]));
    }

    #[test]
    fn ring_future_cone() {
        let g = Graph::ring(5).unwrap();
        let p = ConeParams::new(1, 1, 1).unwrap();
        let t = cone_template(&g, 0, &p, Direction::Future);
        assert_eq!(t.offsets, offs(&[(0, 1), (1, 1), (4, 1)]));
    }

    #[test]
    fn isolated_vertex_cone() {
        let g = Graph::empty(3);
        let p = ConeParams::new(2, 4, 3).unwrap();
        let past = cone_template(&g, 1, &p, Direction::Past);
        assert_eq!(past.len(), 4);
        assert!(past.offsets.iter().all(|o| o.vertex == 1));
        assert_eq!(cone_template(&g, 1, &p, Direction::Future).len(), 3);
    }

    #[test]
    fn params_reject_zero() {
        assert!(ConeParams::new(0, 1, 1).is_err());
        assert!(ConeParams::new(1, 0, 1).is_err());
        assert!(ConeParams::new(1, 1, 0).is_err());
    }

    #[test]
    fn temporal_fringe_on_ring() {
        let g = Graph::ring(5).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let f = fringe_template(&g, 0, &p, Move::Temporal).unwrap();
        // Destination cone {(0,-1),(1,-1),(4,-1),(0,0)}; only (0,-1) was the source's (0,0).
        assert_eq!(f.offsets, offs(&[(1, -1), (4, -1), (0, 0)]));
    }

    #[test]
    fn temporal_fringe_isolated() {
        let g = Graph::empty(1);
        let p = ConeParams::new(1, 3, 1).unwrap();
        let f = fringe_template(&g, 0, &p, Move::Temporal).unwrap();
        assert_eq!(f.offsets, offs(&[(0, 0)]));
    }

    #[test]
    fn spatial_fringe_on_ring() {
        let g = Graph::ring(6).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let f = fringe_template(&g, 2, &p, Move::Spatial(3)).unwrap();
        assert_eq!(f.destination, 3);
        assert_eq!(f.offsets, offs(&[(4, -1), (3, 0)]));
        assert!(fringe_template(&g, 2, &p, Move::Spatial(4)).is_err());
    }

    #[test]
    fn ring_signatures_agree() {
        let g = Graph::ring(7).unwrap();
        let p = ConeParams::new(1, 3, 2).unwrap();
        let sigs: BTreeSet<String> = (0..7)
            .map(|v| {
                let past = cone_template(&g, v, &p, Direction::Past);
                let fut = cone_template(&g, v, &p, Direction::Future);
                joint_cone_shape(&g, v, &[&past, &fut]).signature
            })
            .collect();
        assert_eq!(sigs.len(), 1);
    }

    #[test]
    fn ring_canonical_order_is_rotation_consistent() {
        let g = Graph::ring(8).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let rel = |v: usize| -> Vec<usize> {
            let past = cone_template(&g, v, &p, Direction::Past);
            let s = cone_shape_signature(&past, &g);
            s.canonical_order.unwrap().iter().map(|&u| (u + 8 - v) % 8).collect()
        };
        let r0 = rel(0);
        for v in 1..8 {
            assert_eq!(rel(v), r0);
        }
    }

    #[test]
    fn star_center_differs_from_leaf() {
        let g = Graph::star(5).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let sig = |v| cone_shape_signature(&cone_template(&g, v, &p, Direction::Past), &g).signature;
        assert_ne!(sig(0), sig(1));
        assert_eq!(sig(1), sig(2));
    }

    #[test]
    fn single_vertex_signature_reflexive() {
        let g = Graph::empty(1);
        let p = ConeParams::new(1, 2, 2).unwrap();
        let t = cone_template(&g, 0, &p, Direction::Past);
        assert_eq!(cone_shape_signature(&t, &g), cone_shape_signature(&t, &g));
    }

    #[test]
    fn triangle_vs_path_differ() {
        // Center of a path P3 and a vertex of a triangle have equal cone sizes but
        // different adjacency inside the cone.
        let path = Graph::path(3).unwrap();
        let tri = Graph::ring(3).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let a = cone_shape_signature(&cone_template(&path, 1, &p, Direction::Past), &path);
        let b = cone_shape_signature(&cone_template(&tri, 0, &p, Direction::Past), &tri);
        assert_ne!(a.signature, b.signature);
    }
}
