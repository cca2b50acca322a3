//! Weighted contrastive training of a visual projection head against sets of
//! weakly related sentences, with zero-shot evaluation and similarity maps.

pub mod dataset;
pub mod embed;
pub mod error;
pub mod interchange;
pub mod linalg;
pub mod losses;
pub mod seed;
pub mod simmap;
pub mod synth;
pub mod train;
pub mod zeroshot;

pub use error::{CoreError, Result};
pub use linalg::{EmbeddingVector, Matrix, Normalized};
