//! File formats and run configuration.
//!
//! Three formats live here, all byte-documented in their modules:
//! sequence files (text or binary pose sequences), the portable weight
//! container, and the plain-text run configuration.

pub mod config;
pub mod sequence;
pub mod weights;

pub use config::RunConfig;
pub use sequence::{load_sequence, save_sequence, SequenceData};
pub use weights::{load_weights, save_weights};
