//! Reverse-mode differentiation and the planner → querying transformer →
//! action expert model built on it.

pub mod model;
pub mod tape;

pub use model::{is_planner_param, Forward, ModelConfig, Objective, ToyModel};
pub use tape::{Tape, Tensor, Var};
