//! Instance masks for a content image: produced by a pluggable backend or
//! loaded from a precomputed manifest, made disjoint, ordered for pasting
//! and cut into full-frame pieces.

mod backend;
mod instance;
mod manifest;

pub use backend::{
    detect_instances, CommandBackend, DetectOptions, Detection, SegmentationBackend, StaticBackend,
};
pub use instance::{
    extract_pieces, resolve_overlaps, InstanceMask, Ordering, PasteOrder, Pieces, SegmentationResult,
};
pub use manifest::{load_manifest, manifest_json, parse_manifest, save_manifest, LoadedManifest};
