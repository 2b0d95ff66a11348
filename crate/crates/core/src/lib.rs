//! Segmentation-aware arbitrary style transfer.
//!
//! A content image is split into per-object pieces plus background
//! ([`segmentation`]), each piece is stylized on its own by a
//! style-attention network ([`style`]), and the stylized pieces are pasted
//! back through their masks ([`compositor`]).

pub mod compositor;
pub mod config;
pub mod error;
pub mod imaging;
pub mod nn;
mod par;
pub mod segmentation;
pub mod style;

pub use config::{BackendKind, PipelineConfig};
pub use error::{Error, Result};
pub use par::current_num_threads;
