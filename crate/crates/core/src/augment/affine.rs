use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::{Error, Result};

/// One composed transform: flip, then rotate about the centre, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineParams {
    pub flip_h: bool,
    pub flip_v: bool,
    /// Degrees, counter-clockwise as displayed.
    pub rotation: f64,
    /// Fraction of the width; positive moves content right.
    pub translate_x: f64,
    /// Fraction of the height; positive moves content down.
    pub translate_y: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        flip_h: false,
        flip_v: false,
        rotation: 0.0,
        translate_x: 0.0,
        translate_y: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRanges {
    pub flip_probability: f64,
    /// Rotation is drawn from `[-max_rotation, max_rotation]` degrees.
    pub max_rotation: f64,
    /// Each translation is drawn from `[-max_translate, max_translate]`.
    pub max_translate: f64,
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            max_rotation: 90.0,
            max_translate: 0.1,
        }
    }
}

impl AffineRanges {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config("flip probability must lie in [0, 1]".into()));
        }
        if !(self.max_rotation >= 0.0 && self.max_rotation.is_finite())
            || !(self.max_translate >= 0.0 && self.max_translate.is_finite())
        {
            return Err(Error::Config(
                "rotation and translation ranges must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: &AffineParams) -> bool {
        p.rotation.abs() <= self.max_rotation
            && p.translate_x.abs() <= self.max_translate
            && p.translate_y.abs() <= self.max_translate
    }
}

/// Draws every component independently: flips as Bernoulli trials, the rest
/// uniformly over their symmetric ranges.
pub fn sample_affine<R: Rng + ?Sized>(rng: &mut R, ranges: &AffineRanges) -> AffineParams {
    let mut symmetric = |m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
    let rotation = symmetric(ranges.max_rotation);
    let translate_x = symmetric(ranges.max_translate);
    let translate_y = symmetric(ranges.max_translate);
    AffineParams {
        flip_h: rng.gen_bool(ranges.flip_probability),
        flip_v: rng.gen_bool(ranges.flip_probability),
        rotation,
        translate_x,
        translate_y,
    }
}

/// Rounds values within 1e-12 of an integer to it, so quarter turns stay exact.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-12 {
        r
    } else {
        v
    }
}

fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

/// Half-sample symmetric reflection of a pixel index into `0..n`.
fn reflect_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Applies `params` to an `[H, W, C]` image by inverse mapping with bilinear
/// sampling. Pixels mapped from outside the image are mirrored back in, and
/// the result is clamped to `[0, 1]`.
pub fn apply_affine(image: &Tensor<f32>, params: &AffineParams) -> Result<Tensor<f32>> {
    if image.rank() != 3 || image.is_empty() {
        return Err(Error::Data(format!(
            "expected a non-empty [H, W, C] image, got {:?}",
            image.shape()
        )));
    }
    if params.is_identity() {
        return Ok(image.clone());
    }
    let [h, w, c] = [image.shape()[0], image.shape()[1], image.shape()[2]];
    let theta = params.rotation.to_radians();
    let (sin, cos) = (snap(theta.sin()), snap(theta.cos()));
    let (half_w, half_h) = (w as f64 / 2.0, h as f64 / 2.0);
    let (shift_x, shift_y) = (params.translate_x * w as f64, params.translate_y * h as f64);
    let src = image.data();
    let mut out = Vec::with_capacity(image.len());
    let mut px = vec![0f32; c];
    for y in 0..h {
        for x in 0..w {
            // centred coordinates, y pointing down
            let u = x as f64 + 0.5 - half_w - shift_x;
            let v = y as f64 + 0.5 - half_h - shift_y;
            let mut su = u * cos - v * sin;
            let mut sv = u * sin + v * cos;
            if params.flip_h {
                su = -su;
            }
            if params.flip_v {
                sv = -sv;
            }
            let sx = su + half_w - 0.5;
            let sy = sv + half_h - 0.5;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (tx, ty) = ((sx - x0) as f32, (sy - y0) as f32);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let xs = [reflect_index(x0, w), reflect_index(x0 + 1, w)];
            let ys = [reflect_index(y0, h), reflect_index(y0 + 1, h)];
            let at = |yy: usize, xx: usize, ch: usize| src[(yy * w + xx) * c + ch];
            for (ch, p) in px.iter_mut().enumerate() {
                let top = lerp(at(ys[0], xs[0], ch), at(ys[0], xs[1], ch), tx);
                let bottom = lerp(at(ys[1], xs[0], ch), at(ys[1], xs[1], ch), tx);
                *p = lerp(top, bottom, ty).clamp(0.0, 1.0);
            }
            out.extend_from_slice(&px);
        }
    }
    Ok(Tensor::from_vec(image.shape(), out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pattern3x3() -> Tensor<f32> {
        // single channel values 1..9 scaled into [0, 1]
        Tensor::from_vec(&[3, 3, 1], (1..=9).map(|v| v as f32 / 10.0).collect()).unwrap()
    }

    fn values(t: &Tensor<f32>) -> Vec<u32> {
        t.data().iter().map(|v| (v * 10.0).round() as u32).collect()
    }

    #[test]
    fn identity_is_bitwise() {
        let img = pattern3x3();
        assert_eq!(apply_affine(&img, &AffineParams::IDENTITY).unwrap(), img);
    }

    #[test]
    fn quarter_turn_counter_clockwise() {
        // 1 2 3        3 6 9
        // 4 5 6   ->   2 5 8
        // 7 8 9        1 4 7
        let p = AffineParams {
            rotation: 90.0,
            ..AffineParams::IDENTITY
        };
        assert_eq!(
            values(&apply_affine(&pattern3x3(), &p).unwrap()),
            [3, 6, 9, 2, 5, 8, 1, 4, 7]
        );
        let p = AffineParams {
            rotation: -90.0,
            ..AffineParams::IDENTITY
        };
        assert_eq!(
            values(&apply_affine(&pattern3x3(), &p).unwrap()),
            [7, 4, 1, 8, 5, 2, 9, 6, 3]
        );
    }

    #[test]
    fn flips() {
        let h = AffineParams {
            flip_h: true,
            ..AffineParams::IDENTITY
        };
        assert_eq!(
            values(&apply_affine(&pattern3x3(), &h).unwrap()),
            [3, 2, 1, 6, 5, 4, 9, 8, 7]
        );
        let v = AffineParams {
            flip_v: true,
            ..AffineParams::IDENTITY
        };
        assert_eq!(
            values(&apply_affine(&pattern3x3(), &v).unwrap()),
            [7, 8, 9, 4, 5, 6, 1, 2, 3]
        );
        let twice = apply_affine(&apply_affine(&pattern3x3(), &h).unwrap(), &h).unwrap();
        assert_eq!(twice, pattern3x3());
    }

    #[test]
    fn flip_then_rotate_order() {
        // flip_h gives 3 2 1 / 6 5 4 / 9 8 7, then a quarter turn counter-clockwise
        let p = AffineParams {
            flip_h: true,
            rotation: 90.0,
            ..AffineParams::IDENTITY
        };
        assert_eq!(
            values(&apply_affine(&pattern3x3(), &p).unwrap()),
            [1, 4, 7, 2, 5, 8, 3, 6, 9]
        );
    }

    #[test]
    fn whole_pixel_translation_reflects_at_border() {
        // one third of the width = one pixel to the right; column 0 mirrors column 0
        let p = AffineParams {
            translate_x: 1.0 / 3.0,
            ..AffineParams::IDENTITY
        };
        let got = values(&apply_affine(&pattern3x3(), &p).unwrap());
        assert_eq!(got, [1, 1, 2, 4, 4, 5, 7, 7, 8]);
    }

    #[test]
    fn reflect_index_is_half_sample_symmetric() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(got, [2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0, 1]);
    }

    #[test]
    fn sampling_is_reproducible_and_in_range() {
        let ranges = AffineRanges::default();
        let a = sample_affine(&mut ChaCha8Rng::seed_from_u64(3), &ranges);
        let b = sample_affine(&mut ChaCha8Rng::seed_from_u64(3), &ranges);
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<_> = (0..10_000)
            .map(|_| sample_affine(&mut rng, &ranges))
            .collect();
        assert!(draws.iter().all(|p| ranges.contains(p)));
        let freq = draws.iter().filter(|p| p.flip_h).count() as f64 / draws.len() as f64;
        assert!((0.48..=0.52).contains(&freq), "{freq}");
        let freq_v = draws.iter().filter(|p| p.flip_v).count() as f64 / draws.len() as f64;
        assert!((0.48..=0.52).contains(&freq_v), "{freq_v}");
    }

    #[test]
    fn rejects_non_images() {
        assert!(apply_affine(&Tensor::zeros(&[3, 3]), &AffineParams::IDENTITY).is_err());
    }
}
