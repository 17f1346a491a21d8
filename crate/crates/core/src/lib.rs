pub mod baselines;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod netcore;
pub mod pipeline;

pub use error::{Error, Result};
