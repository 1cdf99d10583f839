pub mod attributes;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pairselect;
pub mod vqasim;
pub use error::{Error, Result};
