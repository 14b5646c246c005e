pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod nn;
pub mod output;
pub mod par;

pub use error::{Error, Result};
