pub mod agents;
pub mod assembly_env;
pub mod dense_net;
pub mod error;
pub mod harness;
pub mod mapping;
pub mod matrix;
pub mod timing;

pub use error::{Error, Result};
