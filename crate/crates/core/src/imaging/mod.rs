//! Image and mask data model, file I/O and the power-of-two preprocessing
//! the style network needs.

mod image;
mod mask;
mod resize;
pub mod rle;

pub use self::image::{load_image, Image};
pub use self::mask::{mask_apply, mask_complement, mask_union, BBox, BinaryMask};
pub use self::resize::{
    apply_inverse, nearest_power_of_two, next_power_of_two, plan_power_of_two, resize, to_power_of_two,
    Interpolation, InverseTransform, ResizeMode, ResizePolicy, MIN_SIDE,
};
pub use self::rle::Rle;
