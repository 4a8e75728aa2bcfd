//! Light-cone state reconstruction for fields on graphs.
//!
//! Estimators are generic over the floating-point type through [`Scalar`];
//! the aliases below fix it to `f64`, which is what the command-line tool uses.

pub mod analysis;
pub mod cone;
pub mod config;
pub mod distribution;
pub mod error;
pub mod field;
pub mod filter;
pub mod graph;
pub mod hash;
pub mod homogeneity;
pub mod info;
pub mod label;
pub mod layout;
pub mod oracle;
pub mod predict;
pub mod reconstruct;
pub mod rules;
pub mod scalar;
pub mod stats;

pub use cone::{ConeParams, ConeTemplate, Direction, FringeTemplate, Move, Offset, Point};
pub use config::{ConeConfig, ConfigCodec, ConfigKey, Symbol};
pub use error::{Error, Result};
pub use field::FieldSeries;
pub use graph::{Graph, Vertex};
pub use homogeneity::{TestConfig, TestKind, Verdict};
pub use label::{label_field, StateField};
pub use layout::{ConeLayout, Pooling};
pub use reconstruct::{reconstruct_states, StateId, StateSet};
pub use scalar::Scalar;
pub use stats::{build_cone_database, ConeDatabase};

pub type Prob = distribution::ProbVector<f64>;
