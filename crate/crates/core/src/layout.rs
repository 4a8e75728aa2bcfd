//! Assignment of vertices to statistics classes and per-class slot orders.
//!
//! Without pooling every vertex is its own class and configurations follow the
//! canonical template order. With pooling, vertices whose joint past/future
//! cone shapes have equal signatures share a class, and each vertex's offsets
//! are reordered by its canonical labeling so that slot `i` means the same
//! cone position for every member.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cone::{cone_template, joint_cone_shape, ConeParams, Direction, Offset};
use crate::config::ConfigCodec;
use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    On,
    Off,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexCones {
    pub class: usize,
    /// Past offsets in class slot order.
    pub past: Vec<Offset>,
    /// Future offsets in class slot order.
    pub future: Vec<Offset>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeClass {
    pub signature: String,
    pub vertices: Vec<Vertex>,
    pub past_len: usize,
    pub future_len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeLayout {
    pub params: ConeParams,
    pub pooling: Pooling,
    pub cones: Vec<VertexCones>,
    pub classes: Vec<ConeClass>,
}

impl ConeLayout {
    pub fn new(g: &Graph, params: ConeParams, pooling: Pooling) -> Result<Self> {
        params.validate()?;
        let n = g.vertex_count();
        let mut per_vertex = Vec::with_capacity(n);
        for v in 0..n {
            let past = cone_template(g, v, &params, Direction::Past);
            let future = cone_template(g, v, &params, Direction::Future);
            let shape = joint_cone_shape(g, v, &[&past, &future]);
            let (past_offsets, future_offsets) = match (pooling, shape.rank()) {
                (Pooling::On, Some(rank)) => {
                    let reorder = |mut offs: Vec<Offset>| {
                        offs.sort_by_key(|o| (o.dt, rank[&o.vertex]));
                        offs
                    };
                    (reorder(past.offsets), reorder(future.offsets))
                }
                _ => (past.offsets, future.offsets),
            };
            per_vertex.push((shape.signature, past_offsets, future_offsets));
        }

        let mut classes: Vec<ConeClass> = Vec::new();
        let mut by_signature: BTreeMap<String, usize> = BTreeMap::new();
        let mut cones = Vec::with_capacity(n);
        for (v, (signature, past, future)) in per_vertex.into_iter().enumerate() {
            let class = match pooling {
                Pooling::On => *by_signature.entry(signature.clone()).or_insert_with(|| {
                    classes.push(ConeClass {
                        signature: signature.clone(),
                        vertices: Vec::new(),
                        past_len: past.len(),
                        future_len: future.len(),
                    });
                    classes.len() - 1
                }),
                Pooling::Off => {
                    classes.push(ConeClass {
                        signature: signature.clone(),
                        vertices: Vec::new(),
                        past_len: past.len(),
                        future_len: future.len(),
                    });
                    classes.len() - 1
                }
            };
            classes[class].vertices.push(v);
            cones.push(VertexCones { class, past, future });
        }
        Ok(ConeLayout {
            params,
            pooling,
            cones,
            classes,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.cones.len()
    }

    pub fn class_of(&self, v: Vertex) -> usize {
        self.cones[v].class
    }

    pub fn past_codec(&self, class: usize, alphabet: u16) -> ConfigCodec {
        ConfigCodec::new(alphabet, self.classes[class].past_len)
    }

    pub fn future_codec(&self, class: usize, alphabet: u16) -> ConfigCodec {
        ConfigCodec::new(alphabet, self.classes[class].future_len)
    }

    /// Checks that a stored class description matches this layout.
    pub fn check_classes(&self, classes: &[ConeClass]) -> Result<()> {
        if classes != self.classes.as_slice() {
            return Err(Error::Mismatch(
                "stored cone classes differ from those implied by graph, params and pooling".into(),
            ));
        }
        Ok(())
    }

    /// Number of time steps lost at the start (past cone) and end (future cone).
    pub fn margins(&self) -> (usize, usize) {
        (self.params.past_depth - 1, self.params.future_depth)
    }
}
