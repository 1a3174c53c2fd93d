pub mod dbscan;
pub mod denstream;
pub mod drift;
pub mod error;
pub mod events;
pub mod generator;
pub mod io;
pub mod mixture;
pub mod nmf;
pub mod pipeline;

pub use error::{Error, Result};
