//! File formats, checkpoints and the command-line driver around `hiram-core`.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod settings;

pub use error::{AppError, Result};
