pub mod dense;
pub mod error;
pub mod flow;
pub mod kernels;
pub mod linalg;
pub mod multitask;
pub mod pipeline;
pub mod sparse;

pub use error::{Error, Result};
