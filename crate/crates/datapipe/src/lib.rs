//! Construction of EcoWikiRS-style triplet datasets from GBIF occurrences,
//! Wikipedia species articles and EUNIS habitat labels.

pub mod dump;
pub mod error;
pub mod eunis;
pub mod gbif;
pub mod geo;
pub mod manifest;
pub mod pipeline;
pub mod split;
pub mod wiki;

pub use error::{DataError, Result};
pub use pipeline::{run, write_outputs, PipelineConfig, PipelineInputs, PipelineOutput};
pub use wiki::{SentenceSets, TextType};

/// Keyword list shipped with the crate.
pub const DEFAULT_KEYWORDS: &str = include_str!("../data/keywords.txt");
