//! Forward-pass engine for video pose transformers with temporal token
//! pruning and recovery.
//!
//! The model lifts a 2D keypoint sequence to 3D poses, one token per frame.
//! A hierarchical schedule shrinks the token set in stages across the block
//! stack (by density-peaks clustering, attention received, motion magnitude,
//! or uniform sampling), intermediate blocks run on the few surviving
//! tokens, and the full temporal resolution is restored at the end by a
//! cross-attention layer over learnable queries or by linear interpolation
//! of the predicted 3D poses. Alongside the pipelines, the crate provides an
//! analytic cost model, wall-clock benchmarking, evaluation metrics, and the
//! file formats used by the command-line tool.
//!
//! All numerics are `f64`, all tensors row-major, and every forward pass is
//! a pure function of its weights and input, so identical seeds and inputs
//! give bitwise-identical results.

pub mod analysis;
pub mod error;
pub mod io;
pub mod kernel;
pub mod model;
pub mod pipeline;
pub mod prune;
pub mod recover;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
pub use kernel::Matrix;
pub use model::{ModelConfig, ModelWeights};
pub use pipeline::{Mode, PipelineConfig, Recovery};
pub use prune::{PruneSchedule, SelectionTrace, Strategy};
pub use rng::Rng;
pub use types::{Pose3DSequence, PoseSequence2D, PoseTokens};
