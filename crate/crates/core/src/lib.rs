pub mod classifier;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod net;

pub use error::{Error, Result};
