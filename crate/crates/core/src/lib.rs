pub mod assignment;
pub mod backend;
pub mod commands;
pub mod error;
pub mod iaf;
pub mod io;
pub mod mask;
pub mod memory;
pub mod metrics;
pub mod overlay;
pub mod pipeline;
pub mod propagation;
pub mod schema;
pub mod simulator;
pub mod warp;

pub use error::{Error, Result};
