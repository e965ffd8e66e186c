//! Distributed video coding with local rank transforms.
//!
//! WZ frames are sent as δ-local-rank images, merged and position coded
//! with an MQ arithmetic coder, plus one mean per 16x16 block. The decoder
//! builds side information from neighboring key frames by motion search in
//! the rank domain and recovers intensities iteratively.

pub mod complexity;
pub mod entropy;
pub mod error;
pub mod lrt;
pub mod media;
pub mod pipeline;
pub mod recon;
pub mod side_info;

pub use error::{Error, Result};
pub use lrt::{LrtParams, RankImage, Sampling, Variant};
pub use media::Frame;
