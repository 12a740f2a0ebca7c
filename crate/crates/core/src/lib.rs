pub mod audit;
pub mod error;
pub mod gridsim;
pub mod scenario;
pub mod simplify;
pub mod dataset;
pub mod mlp;
pub mod optimize;
pub mod pipeline;
pub mod pwl;

pub use error::{Error, Result};
