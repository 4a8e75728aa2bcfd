//! Per-point state labels.

use std::fmt::Write as _;

use crate::cone::ConeParams;
use crate::error::{Error, Result};
use crate::field::FieldSeries;
use crate::graph::{Graph, Vertex};
use crate::reconstruct::{StateId, StateSet};

/// `T x V` grid of state ids; `None` marks boundary or unseen points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateField {
    vertex_count: usize,
    labels: Vec<Option<StateId>>,
}

impl StateField {
    pub fn unknown(steps: usize, vertex_count: usize) -> Self {
        StateField {
            vertex_count,
            labels: vec![None; steps * vertex_count],
        }
    }

    pub fn steps(&self) -> usize {
        if self.vertex_count == 0 {
            0
        } else {
            self.labels.len() / self.vertex_count
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    #[inline]
    pub fn get(&self, t: usize, v: Vertex) -> Option<StateId> {
        self.labels[t * self.vertex_count + v]
    }

    /// Label at a signed time; `None` outside the grid.
    #[inline]
    pub fn at(&self, t: i64, v: Vertex) -> Option<StateId> {
        if t < 0 || t as usize >= self.steps() {
            None
        } else {
            self.get(t as usize, v)
        }
    }

    pub fn set(&mut self, t: usize, v: Vertex, s: Option<StateId>) {
        self.labels[t * self.vertex_count + v] = s;
    }

    pub fn known_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Vertex, Option<StateId>)> + '_ {
        let n = self.vertex_count;
        self.labels.iter().enumerate().map(move |(i, &l)| (i / n, i % n, l))
    }

    /// Grid text: `states <max_id+1>` then rows of ids, `?` for unknown.
    pub fn to_text(&self) -> String {
        let max = self.labels.iter().flatten().map(|s| s.0 + 1).max().unwrap_or(0);
        let mut out = format!("states {max}\n");
        for t in 0..self.steps() {
            for v in 0..self.vertex_count {
                if v > 0 {
                    out.push(' ');
                }
                match self.get(t, v) {
                    Some(s) => write!(out, "{s}").unwrap(),
                    None => out.push('?'),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, vertex_count: usize) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty label file"))?;
        let bound: u32 = header
            .strip_prefix("states")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::parse(hline, "expected header `states <count>`"))?;
        let mut labels = Vec::new();
        for (lineno, line) in lines {
            let before = labels.len();
            for tok in line.split_whitespace() {
                labels.push(match tok {
                    "?" => None,
                    _ => {
                        let id: u32 = tok.parse().map_err(|_| Error::parse(lineno, format!("bad label `{tok}`")))?;
                        if id >= bound {
                            return Err(Error::parse(lineno, format!("label {id} not below {bound}")));
                        }
                        Some(StateId(id))
                    }
                });
            }
            if labels.len() - before != vertex_count {
                return Err(Error::parse(lineno, "row width does not match vertex count"));
            }
        }
        Ok(StateField { vertex_count, labels })
    }
}

/// Labels every point whose full past cone lies inside the data and whose
/// past configuration belongs to a state.
pub fn label_field(f: &FieldSeries, s: &StateSet, g: &Graph, p: &ConeParams) -> Result<StateField> {
    f.check_graph(g)?;
    if s.layout.params != *p {
        return Err(Error::Mismatch(format!("state set built with {:?}, labeling requested with {p:?}", s.layout.params)));
    }
    if s.layout.vertex_count() != g.vertex_count() {
        return Err(Error::Mismatch("state set layout does not match graph".into()));
    }
    if f.alphabet() != s.alphabet {
        return Err(Error::Mismatch("field alphabet differs from state set".into()));
    }
    let n = g.vertex_count();
    let mut out = StateField::unknown(f.steps(), n);
    let mut buf = Vec::new();
    for t in 0..f.steps() {
        for v in 0..n {
            let cones = &s.layout.cones[v];
            if crate::stats::read_offsets(f, &cones.past, t as i64, &mut buf) {
                let key = s.past_codec(cones.class).encode(&buf);
                out.set(t, v, s.classes[cones.class].state_of(&key));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogeneity::TestConfig;
    use crate::layout::Pooling;
    use crate::reconstruct::reconstruct_states;
    use crate::stats::build_cone_database;

    #[test]
    fn constant_field_labels() {
        let g = Graph::ring(4).unwrap();
        let p = ConeParams::new(1, 3, 1).unwrap();
        let f = FieldSeries::new(4, 2, vec![vec![0; 4]; 10]).unwrap();
        let db = build_cone_database(&f, &g, p, Pooling::On).unwrap();
        let s = reconstruct_states(&db, &TestConfig::chi_squared(0.05), 0).unwrap();
        let sf = label_field(&f, &s, &g, &p).unwrap();
        for v in 0..4 {
            assert_eq!(sf.get(0, v), None);
            assert_eq!(sf.get(1, v), None);
            for t in 2..10 {
                assert_eq!(sf.get(t, v), Some(StateId(0)));
            }
        }
        let text = sf.to_text();
        assert!(text.starts_with("states 1\n? ? ? ?\n"));
        assert_eq!(StateField::from_text(&text, 4).unwrap(), sf);
    }

    #[test]
    fn params_mismatch() {
        let g = Graph::ring(4).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let f = FieldSeries::new(4, 2, vec![vec![0; 4]; 10]).unwrap();
        let db = build_cone_database(&f, &g, p, Pooling::On).unwrap();
        let s = reconstruct_states(&db, &TestConfig::chi_squared(0.05), 0).unwrap();
        let other = ConeParams::new(1, 3, 1).unwrap();
        assert!(matches!(label_field(&f, &s, &g, &other), Err(Error::Mismatch(_))));
    }

    #[test]
    fn unseen_past_is_unknown() {
        let g = Graph::ring(4).unwrap();
        let p = ConeParams::new(1, 1, 1).unwrap();
        let train = FieldSeries::new(4, 2, vec![vec![0; 4]; 5]).unwrap();
        let db = build_cone_database(&train, &g, p, Pooling::On).unwrap();
        let s = reconstruct_states(&db, &TestConfig::chi_squared(0.05), 0).unwrap();
        let test = FieldSeries::new(4, 2, vec![vec![1, 0, 0, 0]; 3]).unwrap();
        let sf = label_field(&test, &s, &g, &p).unwrap();
        assert_eq!(sf.get(1, 0), None);
        assert_eq!(sf.get(1, 1), Some(StateId(0)));
    }
}
