use std::path::Path;

use crate::engine::Tensor;
use crate::{Error, Result};

/// What to do with a source whose size differs from the expected one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizePolicy {
    #[default]
    Reject,
    Resize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageOptions {
    /// Output `[height, width]`.
    pub target: [usize; 2],
    /// Source `[height, width]` the dataset is expected to contain.
    pub expected_source: [usize; 2],
    pub on_mismatch: SizePolicy,
}

impl Default for ImageOptions {
    fn default() -> Self {
        Self {
            target: [230, 350],
            expected_source: [460, 700],
            on_mismatch: SizePolicy::Reject,
        }
    }
}

/// Decodes an image as RGB scaled to `[0, 1]`, shape `[H, W, 3]`.
pub fn decode_rgb(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .into_raw()
        .into_iter()
        .map(|v| f32::from(v) / 255.0)
        .collect();
    Ok(Tensor::from_vec(&[h as usize, w as usize, 3], data)?)
}

/// Loads an image and resizes it to `options.target`.
pub fn load_image(path: &Path, options: &ImageOptions) -> Result<Tensor<f32>> {
    let src = decode_rgb(path)?;
    let [h, w] = [src.shape()[0], src.shape()[1]];
    if [h, w] != options.expected_source && options.on_mismatch == SizePolicy::Reject {
        return Err(Error::Data(format!(
            "{}: {w}×{h} pixels, expected {}×{}",
            path.display(),
            options.expected_source[1],
            options.expected_source[0]
        )));
    }
    resize_bilinear(&src, options.target[0], options.target[1])
}

/// Source coordinate for output index `i` with half-pixel centres, clamped to
/// the valid range, as `(lower index, upper index, weight of upper)`.
fn sample_point(i: usize, out_len: usize, in_len: usize) -> (usize, usize, f32) {
    let scale = in_len as f64 / out_len as f64;
    let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, (s - lo as f64) as f32)
}

fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

/// Bilinear resize of an `[H, W, C]` image.
pub fn resize_bilinear(src: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    if src.rank() != 3 {
        return Err(Error::Data(format!(
            "expected an [H, W, C] image, got {:?}",
            src.shape()
        )));
    }
    let [h, w, c] = [src.shape()[0], src.shape()[1], src.shape()[2]];
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::Data("cannot resize an empty image".into()));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(src.clone());
    }
    let cols: Vec<_> = (0..out_w).map(|x| sample_point(x, out_w, w)).collect();
    let d = src.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let (y0, y1, ty) = sample_point(y, out_h, h);
        for &(x0, x1, tx) in &cols {
            for ch in 0..c {
                let at = |yy: usize, xx: usize| d[(yy * w + xx) * c + ch];
                let top = lerp(at(y0, x0), at(y0, x1), tx);
                let bottom = lerp(at(y1, x0), at(y1, x1), tx);
                out.push(lerp(top, bottom, ty));
            }
        }
    }
    Ok(Tensor::from_vec(&[out_h, out_w, c], out)?)
}

/// Writes an `[H, W, 3]` image in `[0, 1]` as 8-bit PNG.
pub fn save_png(image: &Tensor<f32>, path: &Path) -> Result<()> {
    if image.rank() != 3 || image.shape()[2] != 3 {
        return Err(Error::Data(format!(
            "expected an [H, W, 3] image, got {:?}",
            image.shape()
        )));
    }
    let [h, w] = [image.shape()[0], image.shape()[1]];
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf =
        image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let src = Tensor::<f32>::filled(&[460, 700, 3], 0.3);
        let out = resize_bilinear(&src, 230, 350).unwrap();
        assert_eq!(out.shape(), &[230, 350, 3]);
        assert!(out.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn checkerboard_to_single_pixel_is_mean() {
        let src = Tensor::<f32>::from_vec(&[2, 2, 1], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(resize_bilinear(&src, 1, 1).unwrap().data(), &[0.5]);
        let src = Tensor::<f32>::from_vec(&[2, 2, 1], vec![0.1, 0.2, 0.3, 0.6]).unwrap();
        let got = resize_bilinear(&src, 1, 1).unwrap().data()[0];
        assert!((got - 0.3).abs() < 1e-7);
    }

    #[test]
    fn exact_halving_averages_two_by_two_blocks() {
        let data: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let src = Tensor::from_vec(&[4, 4, 1], data).unwrap();
        let out = resize_bilinear(&src, 2, 2).unwrap();
        // blocks {0,1,4,5}, {2,3,6,7}, {8,9,12,13}, {10,11,14,15}
        assert_eq!(out.data(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn png_round_trip_and_size_policy() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let src = Tensor::<f32>::filled(&[46, 70, 3], 128.0 / 255.0);
        save_png(&src, &path).unwrap();
        let decoded = decode_rgb(&path).unwrap();
        assert_eq!(decoded, src);

        let strict = ImageOptions {
            target: [23, 35],
            expected_source: [460, 700],
            on_mismatch: SizePolicy::Reject,
        };
        assert!(load_image(&path, &strict).is_err());
        let lenient = ImageOptions {
            on_mismatch: SizePolicy::Resize,
            ..strict
        };
        let img = load_image(&path, &lenient).unwrap();
        assert_eq!(img.shape(), &[23, 35, 3]);
        assert!(img.data().iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn undecodable_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(decode_rgb(&path), Err(Error::Image { .. })));
    }
}
