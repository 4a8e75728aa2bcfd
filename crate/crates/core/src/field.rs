//! Discrete space-time field data and its text format.

use std::fmt::Write as _;

use crate::config::Symbol;
use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};

/// `T x V` array of symbols, one row per time step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSeries {
    vertex_count: usize,
    alphabet: u16,
    values: Vec<Symbol>,
}

impl FieldSeries {
    pub fn new(vertex_count: usize, alphabet: u16, rows: Vec<Vec<Symbol>>) -> Result<Self> {
        if alphabet == 0 || alphabet > 256 {
            return Err(Error::Params(format!("alphabet size {alphabet} outside 1..=256")));
        }
        let mut values = Vec::with_capacity(rows.len() * vertex_count);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != vertex_count {
                return Err(Error::Mismatch(format!(
                    "row {t} has width {}, expected {vertex_count}",
                    row.len()
                )));
            }
            if let Some(&s) = row.iter().find(|&&s| s as u16 >= alphabet) {
                return Err(Error::Params(format!("symbol {s} at row {t} not below alphabet {alphabet}")));
            }
            values.extend_from_slice(row);
        }
        Ok(FieldSeries {
            vertex_count,
            alphabet,
            values,
        })
    }

    pub(crate) fn from_flat(vertex_count: usize, alphabet: u16, values: Vec<Symbol>) -> Self {
        debug_assert!(vertex_count == 0 || values.len() % vertex_count == 0);
        FieldSeries {
            vertex_count,
            alphabet,
            values,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn alphabet(&self) -> u16 {
        self.alphabet
    }

    /// Number of time steps `T`.
    pub fn steps(&self) -> usize {
        if self.vertex_count == 0 {
            0
        } else {
            self.values.len() / self.vertex_count
        }
    }

    #[inline]
    pub fn get(&self, t: usize, v: Vertex) -> Symbol {
        self.values[t * self.vertex_count + v]
    }

    /// Value at a signed time, `None` outside `[0, T)`.
    #[inline]
    pub fn at(&self, t: i64, v: Vertex) -> Option<Symbol> {
        if t < 0 || t as usize >= self.steps() {
            None
        } else {
            Some(self.get(t as usize, v))
        }
    }

    pub fn set(&mut self, t: usize, v: Vertex, s: Symbol) {
        assert!((s as u16) < self.alphabet);
        self.values[t * self.vertex_count + v] = s;
    }

    pub fn row(&self, t: usize) -> &[Symbol] {
        &self.values[t * self.vertex_count..(t + 1) * self.vertex_count]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Symbol]> {
        self.values.chunks(self.vertex_count.max(1))
    }

    /// Rows `start..end` as a new series.
    pub fn slice_rows(&self, start: usize, end: usize) -> FieldSeries {
        let v = self.vertex_count;
        FieldSeries::from_flat(v, self.alphabet, self.values[start * v..end * v].to_vec())
    }

    pub fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.vertex_count() != self.vertex_count {
            return Err(Error::Mismatch(format!(
                "field has {} vertices, graph has {}",
                self.vertex_count,
                g.vertex_count()
            )));
        }
        Ok(())
    }
}

/// Parses the field format: `field <alphabet_size>` then one row per time step.
pub fn load_field(text: &str, g: &Graph) -> Result<FieldSeries> {
    let width = g.vertex_count();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty field file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("field") {
        return Err(Error::parse(hline, "expected header `field <alphabet_size>`"));
    }
    let alphabet: u16 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|&a| (1..=256).contains(&a))
        .ok_or_else(|| Error::parse(hline, "bad alphabet size"))?;
    if parts.next().is_some() {
        return Err(Error::parse(hline, "trailing tokens in header"));
    }

    let mut values = Vec::new();
    for (lineno, line) in lines {
        let before = values.len();
        for tok in line.split_whitespace() {
            let s: u16 = tok
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad symbol `{tok}`")))?;
            if s >= alphabet {
                return Err(Error::parse(lineno, format!("symbol {s} not below alphabet size {alphabet}")));
            }
            values.push(s as Symbol);
        }
        if values.len() - before != width {
            return Err(Error::parse(
                lineno,
                format!("row width {} does not match vertex count {width}", values.len() - before),
            ));
        }
    }
    if values.is_empty() {
        return Err(Error::parse(hline, "field has no rows"));
    }
    Ok(FieldSeries::from_flat(width, alphabet, values))
}

pub fn save_field(f: &FieldSeries) -> String {
    let mut out = String::with_capacity(16 + f.values.len() * 2);
    writeln!(out, "field {}", f.alphabet).unwrap();
    for row in f.rows() {
        let mut first = true;
        for s in row {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{s}").unwrap();
        }
        out.push('\n');
    }
    out
}
