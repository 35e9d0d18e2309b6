pub mod cli;
pub mod constructions;
pub mod corpus;
pub mod error;
pub mod linalg;
pub mod op_core;
pub mod permutations;
pub mod projections;
pub mod restdiag;
pub mod seq_ideal;
pub mod tolerances;

pub use error::{Error, Result};
