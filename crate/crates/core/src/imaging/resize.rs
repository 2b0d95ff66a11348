use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};

/// Smallest side the preprocessing will produce; the encoder needs at
/// least this much resolution to reach its deepest layer.
pub const MIN_SIDE: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResizeMode {
    /// Shrink (if larger than `max_side`) preserving aspect, then pad each
    /// side with black up to the next power of two.
    PadToPow2,
    /// Resample each side to its nearest power of two.
    ScaleToPow2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

impl std::str::FromStr for ResizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pad-to-pow2" => Ok(ResizeMode::PadToPow2),
            "scale-to-pow2" => Ok(ResizeMode::ScaleToPow2),
            _ => Err(format!(
                "resize mode `{s}` is not `pad-to-pow2` or `scale-to-pow2`"
            )),
        }
    }
}

impl std::str::FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bilinear" => Ok(Interpolation::Bilinear),
            "nearest" => Ok(Interpolation::Nearest),
            _ => Err(format!("interpolation `{s}` is not `bilinear` or `nearest`")),
        }
    }
}

impl Interpolation {
    fn filter(self) -> FilterType {
        match self {
            Interpolation::Bilinear => FilterType::Triangle,
            Interpolation::Nearest => FilterType::Nearest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResizePolicy {
    pub mode: ResizeMode,
    pub max_side: u32,
    pub interpolation: Interpolation,
}

impl Default for ResizePolicy {
    fn default() -> Self {
        ResizePolicy {
            mode: ResizeMode::ScaleToPow2,
            max_side: 512,
            interpolation: Interpolation::Bilinear,
        }
    }
}

impl ResizePolicy {
    pub fn validate(&self) -> Result<()> {
        if !self.max_side.is_power_of_two() || !(64..=2048).contains(&self.max_side) {
            return Err(Error::contract(format!(
                "max_side must be a power of two in [64, 2048], got {}",
                self.max_side
            )));
        }
        Ok(())
    }
}

/// Records how to map a preprocessed image back to its source geometry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InverseTransform {
    Identity {
        width: u32,
        height: u32,
    },
    Scale {
        original: (u32, u32),
        scaled: (u32, u32),
        interpolation: Interpolation,
    },
    Pad {
        original: (u32, u32),
        /// Size of the content region inside the padded frame.
        inner: (u32, u32),
        offset: (u32, u32),
        padded: (u32, u32),
        interpolation: Interpolation,
    },
}

impl InverseTransform {
    /// Dimensions of the image the forward transform produced.
    pub fn forward_dims(&self) -> (u32, u32) {
        match *self {
            InverseTransform::Identity { width, height } => (width, height),
            InverseTransform::Scale { scaled, .. } => scaled,
            InverseTransform::Pad { padded, .. } => padded,
        }
    }

    pub fn original_dims(&self) -> (u32, u32) {
        match *self {
            InverseTransform::Identity { width, height } => (width, height),
            InverseTransform::Scale { original, .. } | InverseTransform::Pad { original, .. } => original,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, InverseTransform::Identity { .. })
    }
}

/// Nearest power of two by absolute distance; ties go to the smaller one.
pub fn nearest_power_of_two(n: u32) -> u32 {
    if n <= 1 {
        return 1;
    }
    let hi = n.next_power_of_two();
    if hi == n {
        return n;
    }
    let lo = hi / 2;
    if n - lo <= hi - n {
        lo
    } else {
        hi
    }
}

pub fn next_power_of_two(n: u32) -> u32 {
    n.max(1).next_power_of_two()
}

/// Resamples to `width x height`; same-size requests return an exact copy.
pub fn resize(img: &Image, width: u32, height: u32, interpolation: Interpolation) -> Image {
    if img.dims() == (width, height) {
        return img.clone();
    }
    let out = imageops::resize(img.as_rgb32f(), width, height, interpolation.filter());
    Image::from_rgb32f_clamped(out)
}

/// Geometry of the forward transform for a `width x height` source, without
/// touching any pixels.
pub fn plan_power_of_two(width: u32, height: u32, policy: &ResizePolicy) -> InverseTransform {
    let (w, h) = (width, height);
    let max_side = policy.max_side;
    match policy.mode {
        ResizeMode::ScaleToPow2 => {
            let tw = nearest_power_of_two(w).clamp(MIN_SIDE, max_side);
            let th = nearest_power_of_two(h).clamp(MIN_SIDE, max_side);
            if (tw, th) == (w, h) {
                InverseTransform::Identity { width: w, height: h }
            } else {
                InverseTransform::Scale {
                    original: (w, h),
                    scaled: (tw, th),
                    interpolation: policy.interpolation,
                }
            }
        }
        ResizeMode::PadToPow2 => {
            let longest = w.max(h);
            let (iw, ih) = if longest > max_side {
                let f = max_side as f64 / longest as f64;
                let sw = ((w as f64 * f).round() as u32).clamp(1, max_side);
                let sh = ((h as f64 * f).round() as u32).clamp(1, max_side);
                (sw, sh)
            } else {
                (w, h)
            };
            let pw = next_power_of_two(iw).max(MIN_SIDE);
            let ph = next_power_of_two(ih).max(MIN_SIDE);
            if (pw, ph) == (w, h) {
                InverseTransform::Identity { width: w, height: h }
            } else {
                InverseTransform::Pad {
                    original: (w, h),
                    inner: (iw, ih),
                    offset: ((pw - iw) / 2, (ph - ih) / 2),
                    padded: (pw, ph),
                    interpolation: policy.interpolation,
                }
            }
        }
    }
}

/// Brings both sides to powers of two no larger than `policy.max_side`.
pub fn to_power_of_two(img: &Image, policy: &ResizePolicy) -> (Image, InverseTransform) {
    let inv = plan_power_of_two(img.width(), img.height(), policy);
    let out = match inv {
        InverseTransform::Identity { .. } => img.clone(),
        InverseTransform::Scale {
            scaled,
            interpolation,
            ..
        } => resize(img, scaled.0, scaled.1, interpolation),
        InverseTransform::Pad {
            inner,
            offset,
            padded,
            interpolation,
            ..
        } => {
            let inner_img = resize(img, inner.0, inner.1, interpolation);
            let mut canvas = Image::black(padded.0, padded.1);
            for y in 0..inner.1 {
                for x in 0..inner.0 {
                    canvas.set_pixel(x + offset.0, y + offset.1, inner_img.pixel(x, y));
                }
            }
            canvas
        }
    };
    (out, inv)
}

/// Maps an image shaped like the forward output back to the original size.
pub fn apply_inverse(img: &Image, t: &InverseTransform) -> Result<Image> {
    if img.dims() != t.forward_dims() {
        return Err(Error::contract(format!(
            "apply_inverse: image is {:?}, transform expects {:?}",
            img.dims(),
            t.forward_dims()
        )));
    }
    Ok(match *t {
        InverseTransform::Identity { .. } => img.clone(),
        InverseTransform::Scale {
            original,
            interpolation,
            ..
        } => resize(img, original.0, original.1, interpolation),
        InverseTransform::Pad {
            original,
            inner,
            offset,
            interpolation,
            ..
        } => {
            let crop = Image::from_fn(inner.0, inner.1, |x, y| img.pixel(x + offset.0, y + offset.1));
            resize(&crop, original.0, original.1, interpolation)
        }
    })
}
