pub mod cli;
pub mod coatgen;
pub mod dataset;
pub mod detgeom;
pub mod embednet;
pub mod gradcheck;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod mining;
pub mod openset;
pub mod plot;
pub mod repro;

pub use error::{Error, Result};
