use crate::imaging::{resize, Image, Interpolation};

/// Width of the white gap between panels.
pub const SEPARATOR: u32 = 4;

/// One row: content | style | global result | segmented result, each scaled
/// to the smallest of the four heights with its aspect ratio kept.
pub fn compare_grid(content: &Image, style: &Image, global: &Image, segmented: &Image) -> Image {
    let panels = [content, style, global, segmented];
    let height = panels.iter().map(|p| p.height()).min().expect("four panels");
    let scaled: Vec<Image> = panels
        .iter()
        .map(|p| {
            if p.height() == height {
                (*p).clone()
            } else {
                let w = ((p.width() as f64 * height as f64 / p.height() as f64).round() as u32).max(1);
                resize(p, w, height, Interpolation::Bilinear)
            }
        })
        .collect();
    let width = scaled.iter().map(|p| p.width()).sum::<u32>() + SEPARATOR * 3;
    let mut out = Image::filled(width, height, [1.0, 1.0, 1.0]);
    let mut x0 = 0;
    for p in &scaled {
        for y in 0..height {
            for x in 0..p.width() {
                out.set_pixel(x0 + x, y, p.pixel(x, y));
            }
        }
        x0 += p.width() + SEPARATOR;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_panels_layout() {
        let img = Image::from_fn(256, 256, |x, y| [x as f32 / 256.0, y as f32 / 256.0, 0.5]);
        let g = compare_grid(&img, &img, &img, &img);
        assert_eq!(g.dims(), (4 * 256 + 3 * 4, 256));
        for k in 0..4 {
            let x0 = k * (256 + SEPARATOR);
            for (x, y) in [(0, 0), (17, 100), (255, 255)] {
                assert_eq!(g.pixel(x0 + x, y), img.pixel(x, y));
            }
        }
        assert_eq!(g.pixel(256, 10), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn mixed_sizes_scale_to_min_height() {
        let a = Image::filled(300, 200, [0.1, 0.2, 0.3]);
        let b = Image::filled(100, 100, [0.4, 0.4, 0.4]);
        let c = Image::filled(64, 128, [0.9, 0.1, 0.1]);
        let g = compare_grid(&a, &b, &c, &a);
        // Widths at height 100: 150, 100, 50, 150.
        assert_eq!(g.dims(), (150 + 100 + 50 + 150 + 12, 100));
        assert_eq!(g.pixel(150 + 4 + 50, 50), [0.4, 0.4, 0.4]);
        let px = g.pixel(150 + 4 + 100 + 4 + 25, 50);
        assert!((px[0] - 0.9).abs() < 1e-6);
    }
}
