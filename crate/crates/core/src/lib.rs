pub mod analytic;
pub mod dist;
pub mod econ;
pub mod error;
pub mod mc;
pub mod model;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
