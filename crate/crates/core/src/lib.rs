//! Identification of probability-raising causes in uncertain parametric MDPs
//! with probably-approximately-correct guarantees.

pub mod error;
pub mod expr;
pub mod fixtures;
pub mod graph;
pub mod gridworld;
pub mod model;
pub mod reach;
pub mod sampler;
pub mod bounds;
pub mod cover;
pub mod spr;
pub mod validation;

pub use error::{Error, Result};
pub use model::{parse_model, ConcreteModel, ParamSpace, ParametricModel, StateSet};
pub use sampler::{parse_dist, sample, DistSpec, SampleBatch};
