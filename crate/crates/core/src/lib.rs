pub mod benchmarks;
pub mod cli;
pub mod design;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod models;
pub mod nowcast;
pub mod simulation;
pub mod solver;
pub mod tuning;
