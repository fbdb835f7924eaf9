pub mod cell;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod germ;
pub mod lattice;
pub mod linalg;
pub mod pencil;
pub mod pipeline;
pub mod report;
pub mod scenario;

pub use error::{Error, Result};
