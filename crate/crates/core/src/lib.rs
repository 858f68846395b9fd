pub mod classifiers;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod models;
pub mod rng;
pub mod samplers;
pub mod special;

pub use error::{Error, Result};
