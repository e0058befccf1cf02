pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod penalty;
pub mod quad;
pub mod sim;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
