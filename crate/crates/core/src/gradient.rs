//! Grayscale images, Sobel gradients and sub-pixel gradient sampling.
//!
//! Pixel `(x, y)` addresses column `x` and row `y`; pixel centers sit on
//! integer coordinates and the y axis points down. Gradient directions are
//! `atan2(gy, gx)` in that frame.
//!
//! Sub-pixel values come from a Catmull-Rom bicubic kernel. Magnitude is
//! interpolated directly while the direction is rebuilt from the interpolated
//! `gx`/`gy` components so that samples straddling the ±π cut stay coherent.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Real-valued luminance image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidInput(format!(
                "image must be at least 3x3, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} luminance values for a {width}x{height} image, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "luminance values must be finite".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds an image from 8-bit luminance samples.
    pub fn from_luma8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&v| f64::from(v)).collect())
    }

    /// Builds an image from interleaved 8-bit RGB using BT.601 luma weights.
    pub fn from_rgb8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidInput("RGB buffer size mismatch".into()));
        }
        let luma = data
            .chunks_exact(3)
            .map(|px| {
                0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2])
            })
            .collect();
        Self::new(width, height, luma)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Applies `f` to every luminance value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Rounds and clamps to 8-bit luminance.
    pub fn to_luma8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Interpolated gradient at a sub-pixel location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientSample {
    pub magnitude: f64,
    pub direction: f64,
    pub gx: f64,
    pub gy: f64,
}

/// Per-pixel Sobel response. The one-pixel frame holds zeros.
#[derive(Clone, Debug)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
    magnitude: Vec<f64>,
    direction: Vec<f64>,
}

/// Distance from the image border below which [`GradientField::sample`] refuses to sample.
pub const SAMPLE_MARGIN: f64 = 2.0;

impl GradientField {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn gx(&self, x: usize, y: usize) -> f64 {
        self.gx[self.idx(x, y)]
    }

    #[inline]
    pub fn gy(&self, x: usize, y: usize) -> f64 {
        self.gy[self.idx(x, y)]
    }

    #[inline]
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        self.magnitude[self.idx(x, y)]
    }

    #[inline]
    pub fn direction(&self, x: usize, y: usize) -> f64 {
        self.direction[self.idx(x, y)]
    }

    /// True when `(x, y)` keeps the full bicubic support inside the Sobel interior.
    #[inline]
    pub fn is_sampleable(&self, x: f64, y: f64) -> bool {
        x.is_finite()
            && y.is_finite()
            && x >= SAMPLE_MARGIN
            && y >= SAMPLE_MARGIN
            && x <= self.width as f64 - 1.0 - SAMPLE_MARGIN
            && y <= self.height as f64 - 1.0 - SAMPLE_MARGIN
    }

    /// Bicubic sample of the gradient at a sub-pixel location.
    pub fn sample(&self, x: f64, y: f64) -> Result<GradientSample> {
        if !self.is_sampleable(x, y) {
            return Err(Error::OutOfBounds { x, y });
        }
        let xf = x.floor();
        let yf = y.floor();
        let wx = catmull_rom_weights(x - xf);
        let wy = catmull_rom_weights(y - yf);
        let (x0, y0) = (xf as usize - 1, yf as usize - 1);

        let mut mag = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (row, wyr) in wy.iter().enumerate() {
            if *wyr == 0.0 {
                continue;
            }
            let base = (y0 + row) * self.width + x0;
            let mut m_row = 0.0;
            let mut gx_row = 0.0;
            let mut gy_row = 0.0;
            for (col, wxc) in wx.iter().enumerate() {
                if *wxc == 0.0 {
                    continue;
                }
                m_row += wxc * self.magnitude[base + col];
                gx_row += wxc * self.gx[base + col];
                gy_row += wxc * self.gy[base + col];
            }
            mag += wyr * m_row;
            gx += wyr * gx_row;
            gy += wyr * gy_row;
        }
        Ok(GradientSample {
            magnitude: mag,
            direction: gy.atan2(gx),
            gx,
            gy,
        })
    }
}

/// Catmull-Rom (a = -0.5) weights for the taps at offsets -1, 0, 1, 2.
#[inline]
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    if t == 0.0 {
        return [0.0, 1.0, 0.0, 0.0];
    }
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Raw (unnormalized) 3x3 Sobel gradient.
pub fn compute_gradient(image: &GrayImage) -> Result<GradientField> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidInput(format!(
            "image must be at least 3x3, got {w}x{h}"
        )));
    }
    let src = image.pixels();
    let mut rows = vec![[0.0f64; 4]; w * h];
    rows.par_chunks_mut(w)
        .enumerate()
        .filter(|(y, _)| *y >= 1 && *y + 1 < h)
        .for_each(|(y, out)| {
            let up = &src[(y - 1) * w..y * w];
            let mid = &src[y * w..(y + 1) * w];
            let down = &src[(y + 1) * w..(y + 2) * w];
            for x in 1..w - 1 {
                let gx = (up[x + 1] + 2.0 * mid[x + 1] + down[x + 1])
                    - (up[x - 1] + 2.0 * mid[x - 1] + down[x - 1]);
                let gy = (down[x - 1] + 2.0 * down[x] + down[x + 1])
                    - (up[x - 1] + 2.0 * up[x] + up[x + 1]);
                let mag = (gx * gx + gy * gy).sqrt();
                let dir = if mag > 0.0 { gy.atan2(gx) } else { 0.0 };
                out[x] = [gx, gy, mag, dir];
            }
        });

    let mut field = GradientField {
        width: w,
        height: h,
        gx: Vec::with_capacity(w * h),
        gy: Vec::with_capacity(w * h),
        magnitude: Vec::with_capacity(w * h),
        direction: Vec::with_capacity(w * h),
    };
    for [gx, gy, mag, dir] in rows {
        field.gx.push(gx);
        field.gy.push(gy);
        field.magnitude.push(mag);
        field.direction.push(dir);
    }
    Ok(field)
}

/// Smallest side accepted for a pyramid level.
pub const MIN_LEVEL_SIZE: usize = 8;

/// Builds `levels` images, index 0 being `image` itself, each next level
/// shrunk by `scale` (2x2 box average when `scale == 2`, bilinear otherwise).
pub fn build_pyramid(image: &GrayImage, levels: usize, scale: f64) -> Result<Vec<GrayImage>> {
    if levels == 0 {
        return Err(Error::InvalidConfiguration(
            "pyramid needs at least one level".into(),
        ));
    }
    if !(scale > 1.0 && scale <= 2.0) {
        return Err(Error::InvalidConfiguration(format!(
            "pyramid scale must lie in (1, 2], got {scale}"
        )));
    }
    let mut pyramid = Vec::with_capacity(levels);
    pyramid.push(image.clone());
    for _ in 1..levels {
        let prev = pyramid.last().expect("non-empty");
        let w = (prev.width() as f64 / scale).floor() as usize;
        let h = (prev.height() as f64 / scale).floor() as usize;
        if w < MIN_LEVEL_SIZE || h < MIN_LEVEL_SIZE {
            return Err(Error::InvalidConfiguration(format!(
                "pyramid level would be {w}x{h}, smaller than {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}"
            )));
        }
        let next = if scale == 2.0 {
            GrayImage::from_fn(w, h, |x, y| {
                0.25 * (prev.get(2 * x, 2 * y)
                    + prev.get(2 * x + 1, 2 * y)
                    + prev.get(2 * x, 2 * y + 1)
                    + prev.get(2 * x + 1, 2 * y + 1))
            })?
        } else {
            GrayImage::from_fn(w, h, |x, y| {
                bilinear(
                    prev,
                    (x as f64 + 0.5) * scale - 0.5,
                    (y as f64 + 0.5) * scale - 0.5,
                )
            })?
        };
        pyramid.push(next);
    }
    Ok(pyramid)
}

fn bilinear(image: &GrayImage, x: f64, y: f64) -> f64 {
    let max_x = (image.width() - 1) as f64;
    let max_y = (image.height() - 1) as f64;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(image.width() - 1);
    let y1 = (y0 + 1).min(image.height() - 1);
    let tx = x - x0 as f64;
    let ty = y - y0 as f64;
    let top = image.get(x0, y0) * (1.0 - tx) + image.get(x1, y0) * tx;
    let bottom = image.get(x0, y1) * (1.0 - tx) + image.get(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    /// Direct 3x3 correlation, kept independent of the row-sliced implementation.
    fn hand_sobel(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
        const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
        const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
        let mut gx = 0.0;
        let mut gy = 0.0;
        for dy in 0..3 {
            for dx in 0..3 {
                let v = img.get(x + dx - 1, y + dy - 1);
                gx += KX[dy][dx] * v;
                gy += KY[dy][dx] * v;
            }
        }
        (gx, gy)
    }

    #[test]
    fn rejects_tiny_images() {
        assert!(GrayImage::new(2, 5, vec![0.0; 10]).is_err());
        assert!(GrayImage::new(4, 4, vec![0.0; 15]).is_err());
        assert!(GrayImage::new(3, 3, vec![f64::NAN; 9]).is_err());
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let img = GrayImage::filled(16, 12, 128.0).unwrap();
        let g = compute_gradient(&img).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                assert_eq!(g.magnitude(x, y), 0.0);
            }
        }
    }

    #[test]
    fn vertical_step_edge_response() {
        let c = 8;
        let img = GrayImage::from_fn(16, 16, |x, _| if x < c { 0.0 } else { 255.0 }).unwrap();
        let g = compute_gradient(&img).unwrap();
        for y in 1..15 {
            for x in [c - 1, c] {
                let (hx, hy) = hand_sobel(&img, x, y);
                assert_eq!(hx, 4.0 * 255.0);
                assert_eq!(hy, 0.0);
                assert_eq!(g.gx(x, y), hx);
                assert_eq!(g.gy(x, y), 0.0);
                assert_eq!(g.direction(x, y), 0.0);
            }
        }
        // mirrored step: dark on the right
        let img = GrayImage::from_fn(16, 16, |x, _| if x < c { 255.0 } else { 0.0 }).unwrap();
        let g = compute_gradient(&img).unwrap();
        assert_eq!(g.gx(c, 5), -4.0 * 255.0);
        assert_eq!(g.direction(c, 5), PI);
    }

    #[test]
    fn diagonal_step_edge_direction() {
        let img = GrayImage::from_fn(20, 20, |x, y| if x > y { 255.0 } else { 0.0 }).unwrap();
        let g = compute_gradient(&img).unwrap();
        for k in 2..18 {
            for (x, y) in [(k, k), (k + 1, k)] {
                let (hx, hy) = hand_sobel(&img, x, y);
                assert_eq!(g.gx(x, y), hx);
                assert_eq!(g.gy(x, y), hy);
                assert_eq!(hx.abs(), hy.abs());
                let phi = g.direction(x, y);
                let quadrant = [FRAC_PI_4, -FRAC_PI_4, 3.0 * FRAC_PI_4, -3.0 * FRAC_PI_4]
                    .iter()
                    .any(|q| (phi - q).abs() < 1e-12);
                assert!(quadrant, "phi = {phi}");
            }
        }
    }

    #[test]
    fn border_is_zero() {
        let img = GrayImage::from_fn(10, 9, |x, y| (x * 7 + y * 13) as f64).unwrap();
        let g = compute_gradient(&img).unwrap();
        for x in 0..10 {
            assert_eq!(g.magnitude(x, 0), 0.0);
            assert_eq!(g.magnitude(x, 8), 0.0);
        }
        for y in 0..9 {
            assert_eq!(g.magnitude(0, y), 0.0);
            assert_eq!(g.magnitude(9, y), 0.0);
        }
        assert!(g.magnitude(4, 4) > 0.0);
    }

    #[test]
    fn magnitude_and_direction_consistent() {
        let img = GrayImage::from_fn(24, 24, |x, y| ((x * 31 + y * 17) % 23) as f64 * 9.0).unwrap();
        let g = compute_gradient(&img).unwrap();
        for y in 1..23 {
            for x in 1..23 {
                let (gx, gy) = (g.gx(x, y), g.gy(x, y));
                assert_abs_diff_eq!(
                    g.magnitude(x, y),
                    (gx * gx + gy * gy).sqrt(),
                    epsilon = 1e-9
                );
                if g.magnitude(x, y) > 0.0 {
                    assert_eq!(g.direction(x, y), gy.atan2(gx));
                }
            }
        }
    }

    #[test]
    fn transposed_image_swaps_components() {
        let img = GrayImage::from_fn(15, 11, |x, y| ((x * x + 3 * y) % 37) as f64).unwrap();
        let t = GrayImage::from_fn(11, 15, |x, y| img.get(y, x)).unwrap();
        let g = compute_gradient(&img).unwrap();
        let gt = compute_gradient(&t).unwrap();
        for y in 0..11 {
            for x in 0..15 {
                assert_eq!(g.gx(x, y).abs(), gt.gy(y, x).abs());
                assert_eq!(g.gy(x, y).abs(), gt.gx(y, x).abs());
            }
        }
    }

    #[test]
    fn sampling_at_knots_is_exact() {
        let img = GrayImage::from_fn(20, 20, |x, y| ((x * 13 + y * 7) % 29) as f64 * 4.0).unwrap();
        let g = compute_gradient(&img).unwrap();
        for y in 2..18 {
            for x in 2..18 {
                let s = g.sample(x as f64, y as f64).unwrap();
                assert_eq!(s.magnitude, g.magnitude(x, y));
                assert_eq!(s.gx, g.gx(x, y));
                assert_eq!(s.gy, g.gy(x, y));
                if g.magnitude(x, y) > 0.0 {
                    assert_eq!(s.direction, g.direction(x, y));
                }
            }
        }
    }

    #[test]
    fn sampling_out_of_bounds() {
        let g = compute_gradient(&GrayImage::filled(20, 20, 1.0).unwrap()).unwrap();
        assert!(matches!(
            g.sample(1.5, 10.0),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(g.sample(10.0, 17.5).is_err());
        assert!(g.sample(f64::NAN, 10.0).is_err());
        assert!(g.sample(2.0, 17.0).is_ok());
    }

    fn synthetic_field(
        w: usize,
        h: usize,
        f: impl Fn(usize, usize) -> (f64, f64),
    ) -> GradientField {
        let mut field = GradientField {
            width: w,
            height: h,
            gx: vec![0.0; w * h],
            gy: vec![0.0; w * h],
            magnitude: vec![0.0; w * h],
            direction: vec![0.0; w * h],
        };
        for y in 0..h {
            for x in 0..w {
                let (m, d) = f(x, y);
                let i = y * w + x;
                field.magnitude[i] = m;
                field.direction[i] = d;
                field.gx[i] = m * d.cos();
                field.gy[i] = m * d.sin();
            }
        }
        field
    }

    #[test]
    fn sampling_constant_field() {
        let g = synthetic_field(16, 16, |_, _| (42.0, 0.3));
        for (x, y) in [(3.25, 4.5), (7.9, 2.1), (12.0, 13.0)] {
            let s = g.sample(x, y).unwrap();
            assert_abs_diff_eq!(s.magnitude, 42.0, epsilon = 1e-9);
            assert_abs_diff_eq!(s.direction, 0.3, epsilon = 1e-9);
        }
    }

    #[test]
    fn sampling_reproduces_affine_ramp() {
        let g = synthetic_field(16, 16, |x, _| (x as f64, 0.0));
        assert_abs_diff_eq!(g.sample(5.5, 7.0).unwrap().magnitude, 5.5, epsilon = 1e-6);
        let g = synthetic_field(16, 16, |x, y| (2.0 * x as f64 - 0.5 * y as f64 + 3.0, 0.0));
        let s = g.sample(6.3, 8.7).unwrap();
        assert_abs_diff_eq!(s.magnitude, 2.0 * 6.3 - 0.5 * 8.7 + 3.0, epsilon = 1e-6);
    }

    #[test]
    fn direction_survives_pi_wrap() {
        // directions alternate just either side of the ±π cut
        let g = synthetic_field(16, 16, |x, _| {
            (10.0, if x % 2 == 0 { PI - 0.01 } else { -PI + 0.01 })
        });
        let s = g.sample(6.5, 6.5).unwrap();
        assert!(s.direction.abs() > PI - 0.02, "direction {}", s.direction);
    }

    #[test]
    fn pyramid_shapes() {
        let img = GrayImage::filled(640, 480, 77.0).unwrap();
        let levels = build_pyramid(&img, 3, 2.0).unwrap();
        let dims: Vec<_> = levels.iter().map(|l| (l.width(), l.height())).collect();
        assert_eq!(dims, vec![(640, 480), (320, 240), (160, 120)]);
        for level in &levels {
            assert!(level.pixels().iter().all(|&v| v == 77.0));
        }
        let single = build_pyramid(&img, 1, 2.0).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0], img);

        let frac = build_pyramid(&img, 2, 1.5).unwrap();
        assert_eq!((frac[1].width(), frac[1].height()), (426, 320));
        assert!(frac[1].pixels().iter().all(|&v| (v - 77.0).abs() < 1e-12));
    }

    #[test]
    fn pyramid_rejects_bad_configuration() {
        let img = GrayImage::filled(40, 40, 1.0).unwrap();
        assert!(build_pyramid(&img, 0, 2.0).is_err());
        assert!(build_pyramid(&img, 2, 2.5).is_err());
        assert!(build_pyramid(&img, 2, 1.0).is_err());
        assert!(build_pyramid(&img, 3, 2.0).is_ok());
        assert!(matches!(
            build_pyramid(&img, 4, 2.0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    proptest! {
        #[test]
        fn pyramid_preserves_mean(
            w in 16usize..48,
            h in 16usize..48,
            seed in any::<u64>(),
            scale in prop_oneof![Just(2.0), 1.2f64..2.0],
        ) {
            let img = GrayImage::from_fn(w, h, |x, y| {
                let v = (x as u64).wrapping_mul(0x9E37_79B9).wrapping_add((y as u64).wrapping_mul(0x85EB_CA6B)) ^ seed;
                (v % 256) as f64
            }).unwrap();
            let levels = build_pyramid(&img, 2, scale).unwrap();
            prop_assert_eq!(levels[1].width(), (w as f64 / scale).floor() as usize);
            if scale == 2.0 {
                // the box filter only drops the odd trailing row/column
                let cropped = GrayImage::from_fn(2 * levels[1].width(), 2 * levels[1].height(), |x, y| img.get(x, y)).unwrap();
                prop_assert!((levels[1].mean() - cropped.mean()).abs() < 1e-9);
            }
        }

        #[test]
        fn parallel_gradient_matches_hand_convolution(seed in any::<u64>()) {
            let img = GrayImage::from_fn(12, 9, |x, y| ((x as u64 * 2654435761 + y as u64 * 40503 + seed) % 256) as f64).unwrap();
            let g = compute_gradient(&img).unwrap();
            for y in 1..8 {
                for x in 1..11 {
                    let (hx, hy) = hand_sobel(&img, x, y);
                    prop_assert_eq!(g.gx(x, y), hx);
                    prop_assert_eq!(g.gy(x, y), hy);
                }
            }
        }
    }
}
