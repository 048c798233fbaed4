//! Reverse-mode automatic differentiation over [`Tensor`](crate::tensor::Tensor).

mod gradcheck;
mod graph;
mod params;

pub use gradcheck::{check_gradient_terms, check_gradients, relative_error, GradCheckReport, FD_STEP};
pub use graph::{Graph, NodeId};
pub use params::{GradTable, ParamStore, Parameter};
