pub mod backends;
pub mod cli;
pub mod config;
pub mod engine;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod eval;
pub mod irag;
pub mod pipeline;
pub mod primitives;
pub mod text;
pub mod tpe;
pub mod vpe;
pub mod websense;
