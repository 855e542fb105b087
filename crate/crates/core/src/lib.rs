pub mod compression;
pub mod data;
pub mod error;
pub mod inter;
pub mod intra;
pub mod magcs;
pub mod mdfd;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result, TensorError};

#[cfg(test)]
pub(crate) mod testutil;
