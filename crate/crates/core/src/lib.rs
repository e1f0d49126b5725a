pub mod cli;
pub mod convex;
pub mod error;
pub mod model;
pub mod path;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
