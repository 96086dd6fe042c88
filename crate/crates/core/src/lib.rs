pub mod density;
pub mod experiments;
pub mod error;
pub mod flow;
pub mod fractal;
pub mod lattice;
pub mod plunnecke;
pub mod rational;
pub mod tableau;
pub mod tiling;
pub mod trimming;

pub use error::{Error, Result};
