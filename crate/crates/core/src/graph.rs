//! Fixed undirected graphs: parsing, shortest-path distances and a few generators.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vertex = usize;

/// Undirected simple graph on vertices `0..vertex_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    vertex_count: usize,
    edges: BTreeSet<(Vertex, Vertex)>,
    adjacency: Vec<Vec<Vertex>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range endpoints.
    pub fn new(vertex_count: usize, edges: impl IntoIterator<Item = (Vertex, Vertex)>) -> Result<Self> {
        let mut g = Graph::empty(vertex_count);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn empty(vertex_count: usize) -> Self {
        Graph {
            vertex_count,
            edges: BTreeSet::new(),
            adjacency: vec![Vec::new(); vertex_count],
        }
    }

    fn add_edge(&mut self, u: Vertex, v: Vertex) -> Result<()> {
        if u >= self.vertex_count || v >= self.vertex_count {
            return Err(Error::Graph(format!(
                "vertex out of range in edge {u}-{v} (vertex_count {})",
                self.vertex_count
            )));
        }
        if u == v {
            return Err(Error::Graph(format!("self-loop at vertex {u}")));
        }
        let key = (u.min(v), u.max(v));
        if !self.edges.insert(key) {
            return Err(Error::Graph(format!("duplicate edge {u}-{v}")));
        }
        let pos = self.adjacency[u].binary_search(&v).unwrap_err();
        self.adjacency[u].insert(pos, v);
        let pos = self.adjacency[v].binary_search(&u).unwrap_err();
        self.adjacency[v].insert(pos, u);
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.edges.iter().copied()
    }

    /// Neighbors of `v` in ascending vertex order.
    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Hop distances from `source`; `None` for unreachable vertices.
    pub fn bfs_distances(&self, source: Vertex) -> Vec<Option<usize>> {
        self.bfs_limited(source, usize::MAX)
    }

    /// Like [`Graph::bfs_distances`] but stops expanding beyond `radius`.
    pub fn bfs_limited(&self, source: Vertex, radius: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.vertex_count];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            if d >= radius {
                continue;
            }
            for &w in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Shortest-path length between `u` and `v`, or `None` if unreachable.
    pub fn distance(&self, u: Vertex, v: Vertex) -> Option<usize> {
        if u == v {
            return Some(0);
        }
        self.bfs_distances(u)[v]
    }

    /// One shortest path from `u` to `v` inclusive of both endpoints.
    pub fn shortest_path(&self, u: Vertex, v: Vertex) -> Option<Vec<Vertex>> {
        let mut parent = vec![usize::MAX; self.vertex_count];
        let mut seen = vec![false; self.vertex_count];
        let mut queue = VecDeque::from([u]);
        seen[u] = true;
        while let Some(x) = queue.pop_front() {
            if x == v {
                let mut path = vec![v];
                let mut cur = v;
                while cur != u {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &w in &self.adjacency[x] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = x;
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// Vertices within `radius` hops of `v`, ascending.
    pub fn ball(&self, v: Vertex, radius: usize) -> Vec<Vertex> {
        self.bfs_limited(v, radius)
            .iter()
            .enumerate()
            .filter_map(|(u, d)| d.map(|_| u))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.vertex_count == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Whether the vertex subset induces a connected subgraph.
    pub fn is_connected_subset(&self, vertices: &[Vertex]) -> bool {
        let Some(&first) = vertices.first() else {
            return false;
        };
        let inside: BTreeSet<Vertex> = vertices.iter().copied().collect();
        let mut seen = BTreeSet::from([first]);
        let mut stack = vec![first];
        while let Some(x) = stack.pop() {
            for &w in &self.adjacency[x] {
                if inside.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == inside.len()
    }

    /// Serializes to the edge-list text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("graph {}\n", self.vertex_count);
        for (u, v) in &self.edges {
            writeln!(out, "{u} {v}").unwrap();
        }
        out
    }

    // Generators

    /// Cycle `0 - 1 - ... - (n-1) - 0`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Graph(format!("ring needs at least 3 vertices, got {n}")));
        }
        Graph::new(n, (0..n).map(|v| (v, (v + 1) % n)))
    }

    pub fn path(n: usize) -> Result<Self> {
        Graph::new(n, (1..n).map(|v| (v - 1, v)))
    }

    /// Vertex 0 joined to every other vertex.
    pub fn star(n: usize) -> Result<Self> {
        Graph::new(n, (1..n).map(|v| (0, v)))
    }

    /// Random tree by sequential attachment: vertex `i` joins a uniformly chosen
    /// earlier vertex whose degree is still below `max_degree`.
    pub fn random_tree(n: usize, max_degree: usize, seed: u64) -> Result<Self> {
        if max_degree < 2 && n > 2 {
            return Err(Error::Graph("random tree needs max_degree >= 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::empty(n);
        for i in 1..n {
            let open: Vec<Vertex> = (0..i).filter(|&u| g.degree(u) < max_degree).collect();
            let parent = open[rng.random_range(0..open.len())];
            g.add_edge(parent, i)?;
        }
        Ok(g)
    }

    /// Random connected graph: a random attachment tree plus `extra_edges`
    /// uniformly drawn non-edges.
    pub fn random_connected(n: usize, extra_edges: usize, seed: u64) -> Result<Self> {
        let mut g = Graph::random_tree(n, n.max(2), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let max_edges = n * n.saturating_sub(1) / 2;
        let target = (g.edge_count() + extra_edges).min(max_edges);
        while g.edge_count() < target {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v && !g.has_edge(u, v) {
                g.add_edge(u, v)?;
            }
        }
        Ok(g)
    }
}

/// Parses the edge-list format: `graph <n>` then one `<u> <v>` per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn load_graph(text: &str) -> Result<Graph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty graph file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("graph") {
        return Err(Error::parse(hline, "expected header `graph <vertex_count>`"));
    }
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(hline, "bad vertex count"))?;
    if parts.next().is_some() {
        return Err(Error::parse(hline, "trailing tokens in header"));
    }

    let mut g = Graph::empty(n);
    for (lineno, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::parse(lineno, format!("expected `<u> <v>`, got `{line}`")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(lineno, format!("bad vertex id `{s}`")))
        };
        let (u, v) = (parse(tokens[0])?, parse(tokens[1])?);
        g.add_edge(u, v).map_err(|e| match e {
            Error::Graph(msg) => Error::parse(lineno, msg),
            other => other,
        })?;
    }
    Ok(g)
}
