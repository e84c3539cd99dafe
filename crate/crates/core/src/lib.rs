pub mod analysis;
pub mod constraints;
pub mod datagen;
pub mod error;
pub mod io;
pub mod lambda_select;
pub mod rc_model;
pub mod regression;
pub mod report;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
