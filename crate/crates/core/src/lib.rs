//! Frequency-sweep laboratory for end-to-end trajectory prediction.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod raster;
pub mod seed;
pub mod subsample;
pub mod train;
pub mod world;

pub use error::{Error, Result};
