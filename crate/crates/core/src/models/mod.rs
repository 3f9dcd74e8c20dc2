//! Benchmark problems and a JSON problem loader.

mod catalog;
mod loader;

pub use catalog::*;
pub use loader::{load_problem, parse_problem, TimeFactor};
