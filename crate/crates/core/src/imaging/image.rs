use std::path::Path;

use image::{DynamicImage, ImageError, ImageReader, Rgb, Rgb32FImage, RgbImage};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// A 3-channel raster with values in `[0, 1]`.
///
/// There is no alpha channel: sources with alpha are flattened over black
/// when loaded. All constructors clamp or validate so the value range holds
/// for every `Image` in existence.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    buf: Rgb32FImage,
}

impl Image {
    /// All-black image. Panics if either side is zero.
    pub fn black(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "image sides must be at least 1");
        Image {
            buf: Rgb32FImage::new(width, height),
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    /// Builds an image from a per-pixel closure; values are clamped to `[0, 1]`
    /// and NaN maps to 0.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image sides must be at least 1");
        let buf = Rgb32FImage::from_fn(width, height, |x, y| {
            let [r, g, b] = f(x, y);
            Rgb([clamp01(r), clamp01(g), clamp01(b)])
        });
        Image { buf }
    }

    /// Wraps interleaved RGB data, rejecting out-of-range or non-finite values.
    pub fn from_raw(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("image sides must be at least 1"));
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::contract(format!(
                "expected {} values for a {width}x{height} RGB image, got {}",
                width as usize * height as usize * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("pixel value {v} outside [0, 1]")));
        }
        let buf = Rgb32FImage::from_raw(width, height, data).expect("length checked above");
        Ok(Image { buf })
    }

    /// Converts an arbitrary 32-bit float RGB buffer, clamping to `[0, 1]`.
    pub fn from_rgb32f_clamped(mut buf: Rgb32FImage) -> Self {
        assert!(
            buf.width() > 0 && buf.height() > 0,
            "image sides must be at least 1"
        );
        for v in buf.iter_mut() {
            *v = clamp01(*v);
        }
        Image { buf }
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let buf = DynamicImage::ImageRgb8(img.clone()).to_rgb32f();
        Image::from_rgb32f_clamped(buf)
    }

    pub fn width(&self) -> u32 {
        self.buf.width()
    }

    pub fn height(&self) -> u32 {
        self.buf.height()
    }

    pub fn dims(&self) -> (u32, u32) {
        self.buf.dimensions()
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        self.buf.get_pixel(x, y).0
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        self.buf
            .put_pixel(x, y, Rgb([clamp01(rgb[0]), clamp01(rgb[1]), clamp01(rgb[2])]));
    }

    /// Interleaved RGB values, row-major.
    pub fn as_raw(&self) -> &[f32] {
        self.buf.as_raw()
    }

    pub fn as_rgb32f(&self) -> &Rgb32FImage {
        &self.buf
    }

    /// Rec. 601 luma of one pixel.
    pub fn luminance(&self, x: u32, y: u32) -> f32 {
        let [r, g, b] = self.pixel(x, y);
        0.299 * r + 0.587 * g + 0.114 * b
    }

    /// Quantizes to 8 bits per channel with round-to-nearest.
    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width(), self.height(), |x, y| {
            let p = self.pixel(x, y);
            Rgb(p.map(|v| (v * 255.0).round() as u8))
        })
    }

    /// Writes an 8-bit PNG (or JPEG, chosen by extension).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8().save(path).map_err(|e| match e {
            ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
    }

    /// Channel-major `(3, height, width)` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let (w, h) = (self.width() as usize, self.height() as usize);
        let raw = self.as_raw();
        let mut data = vec![0.0; 3 * w * h];
        for (i, px) in raw.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * w * h + i] = px[c] as f64;
            }
        }
        Tensor::new(vec![3, h, w], data)
    }

    /// Inverse of [`Image::to_tensor`], clamping values into `[0, 1]`.
    pub fn from_tensor_clamped(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3();
        if c != 3 || h == 0 || w == 0 {
            return Err(Error::contract(format!(
                "expected a (3, h, w) tensor, got {:?}",
                t.shape()
            )));
        }
        let src = t.data();
        let mut data = vec![0.0f32; 3 * h * w];
        for i in 0..h * w {
            for ch in 0..3 {
                let v = src[ch * h * w + i];
                data[i * 3 + ch] = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) as f32 };
            }
        }
        let buf = Rgb32FImage::from_raw(w as u32, h as u32, data).expect("sized above");
        Ok(Image { buf })
    }
}

fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Reads a PNG or JPEG file as a 3-channel image in `[0, 1]`.
///
/// Sources with an alpha channel are composited over black (`c * a`) and the
/// alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    if decoded.width() == 0 || decoded.height() == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "image has a zero-length side".into(),
        });
    }
    Ok(flatten(decoded))
}

fn flatten(img: DynamicImage) -> Image {
    if img.color().has_alpha() {
        let rgba = img.to_rgba32f();
        let buf = Rgb32FImage::from_fn(rgba.width(), rgba.height(), |x, y| {
            let [r, g, b, a] = rgba.get_pixel(x, y).0;
            Rgb([r * a, g * a, b * a])
        });
        Image::from_rgb32f_clamped(buf)
    } else {
        Image::from_rgb32f_clamped(img.to_rgb32f())
    }
}
