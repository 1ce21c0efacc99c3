pub mod banded;
pub mod config;
pub mod constrained;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod monotonicity;
pub mod ntd;
pub mod phantom;
pub mod sensitivity;
pub mod tsvd;

pub use error::{Error, Result};
