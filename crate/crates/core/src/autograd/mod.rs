//! Minimal reverse-mode differentiation over row-major `f32` matrices.

mod gradcheck;
mod graph;
mod optim;
mod params;

pub use gradcheck::{gradcheck, CoordCheck, GradCheck, GradCheckReport};
pub use graph::{huber_value, Gradients, Graph, SetBlocks, Var};
pub use optim::{AdamW, AdamWConfig};
pub use params::{init_rng, Param, ParamId, ParamStore, Tensor};
