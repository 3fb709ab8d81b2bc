pub mod cotrainer;
pub mod error;
pub mod gradnet;
pub mod matcore;
pub mod psscli;
pub mod rng;
pub mod subspace;
pub mod synthtasks;

pub use error::{Error, Result};
