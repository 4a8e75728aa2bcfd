//! Empirical joint counts of past and future cone configurations.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeParams, ConeTemplate, Offset, Point};
use crate::config::{ConeConfig, ConfigCodec, ConfigKey, Symbol};
use crate::distribution::ProbVector;
use crate::error::{Error, Result};
use crate::field::FieldSeries;
use crate::graph::{Graph, Vertex};
use crate::layout::{ConeClass, ConeLayout, Pooling};
use crate::scalar::Scalar;

/// Reads `offsets` around `<v, t>`; `None` if any offset leaves `[0, T)`.
pub fn read_offsets(f: &FieldSeries, offsets: &[Offset], t: i64, buf: &mut Vec<Symbol>) -> bool {
    buf.clear();
    for o in offsets {
        match f.at(t + o.dt, o.vertex) {
            Some(s) => buf.push(s),
            None => return false,
        }
    }
    true
}

/// Configuration of template `tmpl` at `at`, or `None` when out of bounds.
pub fn extract_cone_config(f: &FieldSeries, tmpl: &ConeTemplate, at: Point) -> Option<ConeConfig> {
    let mut buf = Vec::with_capacity(tmpl.len());
    read_offsets(f, &tmpl.offsets, at.time, &mut buf).then(|| ConeConfig(buf))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PastEntry {
    pub total: u64,
    pub futures: BTreeMap<ConfigKey, u64>,
}

impl PastEntry {
    fn add(&mut self, future: ConfigKey, n: u64) {
        self.total += n;
        *self.futures.entry(future).or_insert(0) += n;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub pasts: BTreeMap<ConfigKey, PastEntry>,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.pasts.values().map(|e| e.total).sum()
    }
}

/// Per-class counts of `(past, future)` configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeDatabase {
    pub layout: ConeLayout,
    pub alphabet: u16,
    pub classes: Vec<ClassCounts>,
    /// `(steps, vertices)` of every accumulated series.
    pub series: Vec<(usize, usize)>,
}

type Tally = HashMap<(usize, ConfigKey, ConfigKey), u64>;

impl ConeDatabase {
    pub fn new(layout: ConeLayout, alphabet: u16) -> Self {
        let classes = vec![ClassCounts::default(); layout.classes.len()];
        ConeDatabase {
            layout,
            alphabet,
            classes,
            series: Vec::new(),
        }
    }

    pub fn params(&self) -> ConeParams {
        self.layout.params
    }

    pub fn past_codec(&self, class: usize) -> ConfigCodec {
        self.layout.past_codec(class, self.alphabet)
    }

    pub fn future_codec(&self, class: usize) -> ConfigCodec {
        self.layout.future_codec(class, self.alphabet)
    }

    /// Interior time range `[lo, hi)` where both cones fit in a series of `steps`.
    pub fn interior(&self, steps: usize) -> std::ops::Range<usize> {
        let (lo, hi) = self.layout.margins();
        lo..steps.saturating_sub(hi).max(lo)
    }

    /// Adds one count per interior point of `f`.
    pub fn add_series(&mut self, f: &FieldSeries) -> Result<()> {
        if f.vertex_count() != self.layout.vertex_count() {
            return Err(Error::Mismatch(format!(
                "field has {} vertices, layout has {}",
                f.vertex_count(),
                self.layout.vertex_count()
            )));
        }
        if f.alphabet() != self.alphabet {
            return Err(Error::Mismatch(format!(
                "field alphabet {} differs from database alphabet {}",
                f.alphabet(),
                self.alphabet
            )));
        }
        let p = self.layout.params;
        if f.steps() < p.past_depth + p.future_depth {
            return Err(Error::Params(format!(
                "{} time steps is fewer than past_depth + future_depth = {}",
                f.steps(),
                p.past_depth + p.future_depth
            )));
        }
        let tally = self.tally(f);
        for ((class, past, future), n) in tally {
            self.classes[class].pasts.entry(past).or_default().add(future, n);
        }
        self.series.push((f.steps(), f.vertex_count()));
        Ok(())
    }

    fn tally(&self, f: &FieldSeries) -> Tally {
        let layout = &self.layout;
        let codecs: Vec<(ConfigCodec, ConfigCodec)> = (0..layout.classes.len())
            .map(|c| (self.past_codec(c), self.future_codec(c)))
            .collect();
        self.interior(f.steps())
            .into_par_iter()
            .fold(
                || (Tally::new(), Vec::new()),
                |(mut tally, mut buf), t| {
                    for (v, cones) in layout.cones.iter().enumerate() {
                        let _ = v;
                        let (pc, fc) = &codecs[cones.class];
                        // Interior points always read in bounds.
                        read_offsets(f, &cones.past, t as i64, &mut buf);
                        let past = pc.encode(&buf);
                        read_offsets(f, &cones.future, t as i64, &mut buf);
                        let future = fc.encode(&buf);
                        *tally.entry((cones.class, past, future)).or_insert(0) += 1;
                    }
                    (tally, buf)
                },
            )
            .map(|(t, _)| t)
            .reduce(Tally::new, |mut a, b| {
                let (mut a, b) = if a.len() < b.len() { (b, std::mem::take(&mut a)) } else { (a, b) };
                for (k, n) in b {
                    *a.entry(k).or_insert(0) += n;
                }
                a
            })
    }

    /// Total number of counted points.
    pub fn total(&self) -> u64 {
        self.classes.iter().map(ClassCounts::total).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Past configuration of vertex `v` at time `t` in class slot order.
    pub fn past_key(&self, f: &FieldSeries, v: Vertex, t: i64) -> Option<ConfigKey> {
        let cones = &self.layout.cones[v];
        let mut buf = Vec::with_capacity(cones.past.len());
        read_offsets(f, &cones.past, t, &mut buf).then(|| self.past_codec(cones.class).encode(&buf))
    }

    pub fn future_key(&self, f: &FieldSeries, v: Vertex, t: i64) -> Option<ConfigKey> {
        let cones = &self.layout.cones[v];
        let mut buf = Vec::with_capacity(cones.future.len());
        read_offsets(f, &cones.future, t, &mut buf).then(|| self.future_codec(cones.class).encode(&buf))
    }

    /// Sums per-vertex classes into pooled classes. `self` must be unpooled and
    /// `pooled` must describe the same graph and params with pooling on.
    pub fn pool_into(&self, pooled: ConeLayout) -> Result<ConeDatabase> {
        if self.layout.pooling != Pooling::Off || pooled.pooling != Pooling::On {
            return Err(Error::Params("pool_into maps an unpooled database onto a pooled layout".into()));
        }
        let mut out = ConeDatabase::new(pooled, self.alphabet);
        out.series = self.series.clone();
        for (v, counts) in self.classes.iter().enumerate() {
            let src = &self.layout.cones[v];
            let dst = &out.layout.cones[v];
            let perm = |from: &[Offset], to: &[Offset]| -> Vec<usize> {
                to.iter().map(|o| from.iter().position(|x| x == o).expect("same offsets")).collect()
            };
            let past_perm = perm(&src.past, &dst.past);
            let future_perm = perm(&src.future, &dst.future);
            let (spc, sfc) = (self.past_codec(v), self.future_codec(v));
            let (dpc, dfc) = (out.past_codec(dst.class), out.future_codec(dst.class));
            for (pk, entry) in &counts.pasts {
                let ps = spc.decode(pk);
                let reordered: Vec<Symbol> = past_perm.iter().map(|&i| ps.0[i]).collect();
                let target = out.classes[dst.class].pasts.entry(dpc.encode(&reordered)).or_default();
                for (fk, &n) in &entry.futures {
                    let fs = sfc.decode(fk);
                    let reordered: Vec<Symbol> = future_perm.iter().map(|&i| fs.0[i]).collect();
                    target.add(dfc.encode(&reordered), n);
                }
            }
        }
        Ok(out)
    }

    /// Conditional distribution of futures given a past in `class`.
    pub fn conditional_distribution<F: Scalar>(&self, class: usize, past: &ConfigKey) -> Result<ProbVector<F>> {
        let entry = self
            .classes
            .get(class)
            .and_then(|c| c.pasts.get(past))
            .ok_or_else(|| Error::NoData(format!("past {} unseen in class {class}", self.past_codec(class).format(past))))?;
        ProbVector::from_counts(&entry.futures)
    }

    pub fn to_json(&self) -> DatabaseJson {
        DatabaseJson {
            params: self.layout.params,
            pooling: self.layout.pooling,
            alphabet: self.alphabet,
            series: self.series.clone(),
            classes: self
                .classes
                .iter()
                .enumerate()
                .map(|(c, counts)| {
                    let (pc, fc) = (self.past_codec(c), self.future_codec(c));
                    let class = &self.layout.classes[c];
                    ClassJson {
                        signature: class.signature.clone(),
                        vertices: class.vertices.clone(),
                        past_len: class.past_len,
                        future_len: class.future_len,
                        pasts: counts
                            .pasts
                            .iter()
                            .map(|(k, e)| PastJson {
                                config: pc.format(k),
                                total: e.total,
                                futures: e
                                    .futures
                                    .iter()
                                    .map(|(fk, &n)| FutureJson {
                                        config: fc.format(fk),
                                        count: n,
                                    })
                                    .collect(),
                            })
                            .collect(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_json(doc: &DatabaseJson, g: &Graph) -> Result<Self> {
        let layout = ConeLayout::new(g, doc.params, doc.pooling)?;
        let classes: Vec<ConeClass> = doc
            .classes
            .iter()
            .map(|c| ConeClass {
                signature: c.signature.clone(),
                vertices: c.vertices.clone(),
                past_len: c.past_len,
                future_len: c.future_len,
            })
            .collect();
        layout.check_classes(&classes)?;
        let mut db = ConeDatabase::new(layout, doc.alphabet);
        db.series = doc.series.clone();
        for (c, cj) in doc.classes.iter().enumerate() {
            let (pc, fc) = (db.past_codec(c), db.future_codec(c));
            for pj in &cj.pasts {
                let entry = db.classes[c].pasts.entry(pc.parse(&pj.config)?).or_default();
                for fj in &pj.futures {
                    entry.add(fc.parse(&fj.config)?, fj.count);
                }
                if entry.total != pj.total {
                    return Err(Error::Mismatch(format!("past {} total disagrees with its futures", pj.config)));
                }
            }
        }
        Ok(db)
    }
}

/// Builds a database from one series.
pub fn build_cone_database(f: &FieldSeries, g: &Graph, p: ConeParams, pooling: Pooling) -> Result<ConeDatabase> {
    f.check_graph(g)?;
    let layout = ConeLayout::new(g, p, pooling)?;
    let mut db = ConeDatabase::new(layout, f.alphabet());
    db.add_series(f)?;
    Ok(db)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatabaseJson {
    pub params: ConeParams,
    pub pooling: Pooling,
    pub alphabet: u16,
    pub series: Vec<(usize, usize)>,
    pub classes: Vec<ClassJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassJson {
    pub signature: String,
    pub vertices: Vec<Vertex>,
    pub past_len: usize,
    pub future_len: usize,
    pub pasts: Vec<PastJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PastJson {
    pub config: String,
    pub total: u64,
    pub futures: Vec<FutureJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FutureJson {
    pub config: String,
    pub count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{cone_template, Direction};
    use crate::rules::{simulate, LocalRule, SimConfig};

    #[test]
    fn extract_on_constant_field() {
        let g = Graph::ring(5).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let f = FieldSeries::new(5, 2, vec![vec![0; 5]; 4]).unwrap();
        let t = cone_template(&g, 0, &p, Direction::Past);
        assert_eq!(extract_cone_config(&f, &t, Point::new(0, 2)).unwrap().0, vec![0; 4]);
        assert_eq!(extract_cone_config(&f, &t, Point::new(0, 0)), None);
    }

    #[test]
    fn present_offset_reads_value() {
        let g = Graph::ring(5).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let f = simulate(&g, &LocalRule::shift(2, 5).unwrap(), &SimConfig::uniform(6, 1, 2)).unwrap();
        let t = cone_template(&g, 3, &p, Direction::Past);
        let cfg = extract_cone_config(&f, &t, Point::new(3, 4)).unwrap();
        let idx = t.offsets.iter().position(|o| *o == Offset::new(3, 0)).unwrap();
        assert_eq!(cfg.0[idx], f.get(4, 3));
    }

    #[test]
    fn iid_one_point_pasts() {
        let g = Graph::ring(8).unwrap();
        let p = ConeParams::new(1, 1, 1).unwrap();
        let f = simulate(&g, &LocalRule::iid(vec![0.5, 0.5]).unwrap(), &SimConfig::uniform(200, 4, 2)).unwrap();
        let db = build_cone_database(&f, &g, p, Pooling::Off).unwrap();
        assert!(db.classes.iter().all(|c| c.pasts.len() == 2));
    }

    #[test]
    fn constant_field_counts() {
        let g = Graph::ring(6).unwrap();
        let p = ConeParams::new(1, 3, 2).unwrap();
        let steps = 20;
        let f = FieldSeries::new(6, 2, vec![vec![0; 6]; steps]).unwrap();
        let db = build_cone_database(&f, &g, p, Pooling::On).unwrap();
        assert_eq!(db.classes.len(), 1);
        let c = &db.classes[0];
        assert_eq!(c.pasts.len(), 1);
        let e = c.pasts.values().next().unwrap();
        assert_eq!(e.futures.len(), 1);
        assert_eq!(e.total, ((steps - 3 - 2 + 1) * 6) as u64);
    }

    #[test]
    fn too_short_is_error() {
        let g = Graph::ring(4).unwrap();
        let p = ConeParams::new(1, 3, 2).unwrap();
        let f = FieldSeries::new(4, 2, vec![vec![0; 4]; 4]).unwrap();
        assert!(matches!(build_cone_database(&f, &g, p, Pooling::Off), Err(Error::Params(_))));
    }

    #[test]
    fn mismatched_field_is_error() {
        let g = Graph::ring(4).unwrap();
        let f = FieldSeries::new(5, 2, vec![vec![0; 5]; 4]).unwrap();
        let p = ConeParams::new(1, 1, 1).unwrap();
        assert!(matches!(build_cone_database(&f, &g, p, Pooling::Off), Err(Error::Mismatch(_))));
    }

    #[test]
    fn conditional_normalizes() {
        let g = Graph::ring(4).unwrap();
        let layout = ConeLayout::new(&g, ConeParams::new(1, 1, 1).unwrap(), Pooling::On).unwrap();
        let mut db = ConeDatabase::new(layout, 2);
        let pc = db.past_codec(0);
        let fc = db.future_codec(0);
        let past = pc.encode(&[1]);
        let (a, b) = (fc.encode(&[0, 0, 0]), fc.encode(&[1, 1, 1]));
        let e = db.classes[0].pasts.entry(past.clone()).or_default();
        e.add(a.clone(), 3);
        e.add(b.clone(), 1);
        let d: ProbVector<f64> = db.conditional_distribution(0, &past).unwrap();
        assert_eq!(d.get(&a), 0.75);
        assert_eq!(d.get(&b), 0.25);
        assert!(matches!(db.conditional_distribution::<f64>(0, &pc.encode(&[0])), Err(Error::NoData(_))));
    }

    #[test]
    fn json_round_trip() {
        let g = Graph::ring(6).unwrap();
        let p = ConeParams::new(1, 2, 1).unwrap();
        let f = simulate(&g, &LocalRule::rule184(6).unwrap(), &SimConfig::uniform(50, 2, 2)).unwrap();
        let db = build_cone_database(&f, &g, p, Pooling::On).unwrap();
        let back = ConeDatabase::from_json(&db.to_json(), &g).unwrap();
        assert_eq!(back, db);
    }
}
