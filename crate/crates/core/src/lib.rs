//! Skeleton-based action recognition with a spatial reasoning network over
//! body parts and a two-stream skip-clip temporal stack.

pub mod autodiff;
pub mod cell;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod rng;
pub mod spatial;
pub mod temporal;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
