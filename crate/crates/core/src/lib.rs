pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod log;
pub mod objective;
pub mod rng;
pub mod schedules;

pub use error::{Error, Result};
