//! Recomposition: stylize the background and every instance piece
//! independently, then paste the stylized instances through their masks
//! onto the stylized background in list order.

mod grid;
mod pipeline;

pub use grid::{compare_grid, SEPARATOR};
pub use pipeline::{
    run_pipeline, stylize_at_original_size, IdentityStylizer, NetworkStylizer, PipelineRun, StageTimings,
    Stylizer,
};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, Image};

/// `piece` where the mask is set, `base` elsewhere. No blending.
pub fn paste(base: &Image, piece: &Image, mask: &BinaryMask) -> Result<Image> {
    if base.dims() != piece.dims() || base.dims() != mask.dims() {
        return Err(Error::contract(format!(
            "paste needs equal sizes: base {:?}, piece {:?}, mask {:?}",
            base.dims(),
            piece.dims(),
            mask.dims()
        )));
    }
    let mut out = base.clone();
    let (w, h) = base.dims();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                out.set_pixel(x, y, piece.pixel(x, y));
            }
        }
    }
    Ok(out)
}

/// Pastes `layers` onto `base` in order. Masks are used as given, so where
/// they overlap the later layer wins.
pub fn compose(base: &Image, layers: &[(&Image, &BinaryMask)]) -> Result<Image> {
    layers
        .iter()
        .try_fold(base.clone(), |acc, (piece, mask)| paste(&acc, piece, mask))
}
