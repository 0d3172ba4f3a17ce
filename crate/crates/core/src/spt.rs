//! Host-side shifted patch tokenization.
//!
//! The input image is translated diagonally, the vacated border is zero
//! filled, the shifted copies are stacked after the original along the
//! channel axis, and the stack is cut into non-overlapping `P × P` patches.
//!
//! Token layout: tokens run patch-row-major; inside a token the patch is
//! flattened `(row, col, channel)` ascending, channel fastest.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Channel-last image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T = f32> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::dims("Image::from_vec", "zero-sized image"));
        }
        if data.len() != height * width * channels {
            return Err(Error::dims(
                "Image::from_vec",
                format!("{} values for {height}x{width}x{channels}", data.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> T {
        self.data[(r * self.width + c) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: T) {
        self.data[(r * self.width + c) * self.channels + ch] = v;
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }

    /// Pixels as rows, channels as columns: an `(H·W) × C` matrix.
    pub fn to_pixel_matrix(&self) -> Matrix<T> {
        Matrix::from_vec(self.height * self.width, self.channels, self.data.clone())
            .expect("image buffer has H·W·C elements")
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data
            .iter()
            .map(|x| {
                let v = x.as_f64();
                v * v
            })
            .sum()
    }
}

/// Pixel offsets applied by [`spt_transform`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftSpec {
    pub directions: Vec<(i32, i32)>,
    pub magnitude: u32,
}

impl ShiftSpec {
    /// Left-up, right-up, left-down, right-down at `magnitude` pixels.
    ///
    /// `(dx, dy)` moves content `dx` pixels right and `dy` pixels down, so
    /// left-up is `(-m, -m)`.
    pub fn diagonal(magnitude: u32) -> Self {
        let m = magnitude as i32;
        Self {
            directions: vec![(-m, -m), (m, -m), (-m, m), (m, m)],
            magnitude,
        }
    }

    /// The first `count` diagonal directions.
    pub fn diagonal_prefix(magnitude: u32, count: usize) -> Self {
        let mut spec = Self::diagonal(magnitude);
        spec.directions.truncate(count);
        spec
    }

    pub fn none() -> Self {
        Self {
            directions: Vec::new(),
            magnitude: 0,
        }
    }

    pub fn num_shifts(&self) -> usize {
        self.directions.len()
    }
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self::diagonal(2)
    }
}

/// `N × D_raw` matrix of flattened patches.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenMatrix<T = f32> {
    pub patch: usize,
    pub matrix: Matrix<T>,
}

impl<T: Scalar> TokenMatrix<T> {
    pub fn num_tokens(&self) -> usize {
        self.matrix.rows()
    }

    pub fn raw_dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Translate by `(dx, dy)`: `out(r, c) = img(r − dy, c − dx)`, zero outside.
pub fn shift_image<T: Scalar>(img: &Image<T>, dx: i32, dy: i32) -> Result<Image<T>> {
    let limit = img.height.min(img.width);
    if dx.unsigned_abs() as usize >= limit || dy.unsigned_abs() as usize >= limit {
        return Err(Error::ShiftTooLarge {
            dx,
            dy,
            height: img.height,
            width: img.width,
        });
    }
    let mut out = Image::zeros(img.height, img.width, img.channels);
    let ch = img.channels;
    for r in 0..img.height {
        let sr = r as i64 - dy as i64;
        if sr < 0 || sr >= img.height as i64 {
            continue;
        }
        let sr = sr as usize;
        // destination columns whose source column lies inside the image
        let c_lo = dx.max(0) as usize;
        let c_hi = (img.width as i64 + dx.min(0) as i64) as usize;
        if c_lo >= c_hi {
            continue;
        }
        let sc_lo = (c_lo as i64 - dx as i64) as usize;
        let n = (c_hi - c_lo) * ch;
        let dst = (r * img.width + c_lo) * ch;
        let src = (sr * img.width + sc_lo) * ch;
        out.data[dst..dst + n].copy_from_slice(&img.data[src..src + n]);
    }
    Ok(out)
}

/// Stack the original and every shifted copy along channels.
pub fn spt_transform<T: Scalar>(img: &Image<T>, spec: &ShiftSpec) -> Result<Image<T>> {
    let shifted = spec
        .directions
        .iter()
        .map(|&(dx, dy)| shift_image(img, dx, dy))
        .collect::<Result<Vec<_>>>()?;
    let c = img.channels;
    let out_c = c * (shifted.len() + 1);
    let mut data = Vec::with_capacity(img.height * img.width * out_c);
    for p in 0..img.height * img.width {
        data.extend_from_slice(&img.data[p * c..(p + 1) * c]);
        for s in &shifted {
            data.extend_from_slice(&s.data[p * c..(p + 1) * c]);
        }
    }
    Ok(Image {
        height: img.height,
        width: img.width,
        channels: out_c,
        data,
    })
}

pub fn tokenize<T: Scalar>(stack: &Image<T>, patch: usize) -> Result<TokenMatrix<T>> {
    if patch == 0 || stack.height % patch != 0 || stack.width % patch != 0 {
        return Err(Error::PatchDivisibility {
            patch,
            height: stack.height,
            width: stack.width,
        });
    }
    let (gh, gw) = (stack.height / patch, stack.width / patch);
    let c = stack.channels;
    let row_len = patch * c;
    let raw_dim = patch * row_len;
    let mut data = Vec::with_capacity(gh * gw * raw_dim);
    for pr in 0..gh {
        for pc in 0..gw {
            for r in 0..patch {
                let start = ((pr * patch + r) * stack.width + pc * patch) * c;
                data.extend_from_slice(&stack.data[start..start + row_len]);
            }
        }
    }
    Ok(TokenMatrix {
        patch,
        matrix: Matrix::from_vec(gh * gw, raw_dim, data)?,
    })
}

/// Inverse of [`tokenize`].
pub fn untokenize<T: Scalar>(
    tokens: &TokenMatrix<T>,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Image<T>> {
    let patch = tokens.patch;
    if patch == 0 || height % patch != 0 || width % patch != 0 {
        return Err(Error::PatchDivisibility {
            patch,
            height,
            width,
        });
    }
    let (gh, gw) = (height / patch, width / patch);
    if tokens.num_tokens() != gh * gw || tokens.raw_dim() != patch * patch * channels {
        return Err(Error::dims(
            "untokenize",
            format!(
                "{:?} tokens for a {height}x{width}x{channels} stack",
                tokens.matrix.shape()
            ),
        ));
    }
    let mut img = Image::zeros(height, width, channels);
    let row_len = patch * channels;
    for pr in 0..gh {
        for pc in 0..gw {
            let token = tokens.matrix.row(pr * gw + pc);
            for r in 0..patch {
                let dst = ((pr * patch + r) * width + pc * patch) * channels;
                img.data[dst..dst + row_len].copy_from_slice(&token[r * row_len..(r + 1) * row_len]);
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize) -> Image<f32> {
        Image::from_fn(h, w, 1, |r, c, _| (r * w + c) as f32)
    }

    #[test]
    fn shift_zero_image_and_identity() {
        let z = Image::<f32>::zeros(6, 6, 1);
        assert_eq!(shift_image(&z, 2, -1).unwrap(), z);
        let r = ramp(5, 7);
        assert_eq!(shift_image(&r, 0, 0).unwrap(), r);
    }

    #[test]
    fn shift_ramp_down_right() {
        let r = ramp(4, 4);
        let s = shift_image(&r, 2, 2).unwrap();
        for row in 0..4 {
            for col in 0..4 {
                let expect = if row < 2 || col < 2 {
                    0.0
                } else {
                    ((row - 2) * 4 + (col - 2)) as f32
                };
                assert_eq!(s.get(row, col, 0), expect, "({row},{col})");
            }
        }
        assert_eq!(s.get(2, 2, 0), 0.0);
        assert_eq!(s.get(3, 3, 0), 5.0);
    }

    #[test]
    fn shift_up_left() {
        let r = ramp(4, 5);
        let s = shift_image(&r, -1, -2).unwrap();
        assert_eq!(s.get(0, 0, 0), r.get(2, 1, 0));
        assert_eq!(s.get(1, 3, 0), r.get(3, 4, 0));
        assert_eq!(s.get(2, 0, 0), 0.0);
        assert_eq!(s.get(0, 4, 0), 0.0);
    }

    #[test]
    fn shift_too_large() {
        let r = ramp(4, 6);
        assert!(matches!(shift_image(&r, 4, 0), Err(Error::ShiftTooLarge { .. })));
        assert!(shift_image(&r, 3, -3).is_ok());
    }

    #[test]
    fn spt_channel_counts() {
        let img = Image::<f32>::zeros(88, 88, 1);
        let s = spt_transform(&img, &ShiftSpec::default()).unwrap();
        assert_eq!((s.height(), s.width(), s.channels()), (88, 88, 5));
        let r = ramp(6, 6);
        assert_eq!(spt_transform(&r, &ShiftSpec::none()).unwrap(), r);
    }

    #[test]
    fn spt_constant_image_borders() {
        let v = 3.0f32;
        let img = Image::from_fn(10, 10, 1, |_, _, _| v);
        let s = spt_transform(&img, &ShiftSpec::default()).unwrap();
        // channel 1 is left-up: content moves up-left, so rows/cols 8..10 vacate
        for r in 0..10 {
            for c in 0..10 {
                assert_eq!(s.get(r, c, 0), v);
                let lu = if r >= 8 || c >= 8 { 0.0 } else { v };
                let ru = if r >= 8 || c < 2 { 0.0 } else { v };
                let ld = if r < 2 || c >= 8 { 0.0 } else { v };
                let rd = if r < 2 || c < 2 { 0.0 } else { v };
                assert_eq!([s.get(r, c, 1), s.get(r, c, 2), s.get(r, c, 3), s.get(r, c, 4)], [lu, ru, ld, rd]);
            }
        }
    }

    #[test]
    fn token_shapes() {
        for (h, p, n, d) in [(88, 8, 121, 320), (128, 16, 64, 1280), (88, 11, 64, 605)] {
            let stack = Image::<f32>::zeros(h, h, 5);
            let t = tokenize(&stack, p).unwrap();
            assert_eq!((t.num_tokens(), t.raw_dim()), (n, d));
        }
        assert!(matches!(
            tokenize(&Image::<f32>::zeros(10, 12, 1), 4),
            Err(Error::PatchDivisibility { .. })
        ));
    }

    #[test]
    fn token_element_order() {
        let img = Image::from_fn(4, 4, 2, |r, c, ch| (100 * r + 10 * c + ch) as f32);
        let t = tokenize(&img, 2).unwrap();
        // token 1 = patch row 0, patch col 1
        assert_eq!(t.matrix.row(1), &[20.0, 21.0, 30.0, 31.0, 120.0, 121.0, 130.0, 131.0]);
    }

    proptest! {
        #[test]
        fn tokenize_is_a_bijection(gh in 1usize..5, gw in 1usize..5, p in 1usize..5, c in 1usize..4) {
            let (h, w) = (gh * p, gw * p);
            let img = Image::from_fn(h, w, c, |r, col, ch| ((r * w + col) * c + ch) as f32);
            let t = tokenize(&img, p).unwrap();
            let mut seen: Vec<f32> = t.matrix.data().to_vec();
            seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: Vec<f32> = (0..h * w * c).map(|x| x as f32).collect();
            prop_assert_eq!(seen, expect);
            prop_assert_eq!(untokenize(&t, h, w, c).unwrap(), img);
        }

        #[test]
        fn concatenation_preserves_energy(h in 5usize..14, w in 5usize..14, m in 0u32..3, seed in any::<u64>()) {
            let img = Image::from_fn(h, w, 1, |r, c, _| {
                let x = seed.wrapping_add((r * 131 + c * 7) as u64).wrapping_mul(0x9E3779B97F4A7C15);
                (x >> 40) as f32 / (1u64 << 24) as f32
            });
            let spec = ShiftSpec::diagonal(m);
            let s = spt_transform(&img, &spec).unwrap();
            let mut expect = img.sum_of_squares();
            for &(dx, dy) in &spec.directions {
                expect += shift_image(&img, dx, dy).unwrap().sum_of_squares();
            }
            prop_assert!((s.sum_of_squares() - expect).abs() <= 1e-9 * expect.max(1.0));
        }

        #[test]
        fn shift_then_unshift_restores_interior(h in 4usize..12, w in 4usize..12, dx in -3i32..4, dy in -3i32..4) {
            prop_assume!((dx.unsigned_abs() as usize) < h.min(w) && (dy.unsigned_abs() as usize) < h.min(w));
            let img = Image::from_fn(h, w, 1, |r, c, _| (r * w + c + 1) as f32);
            let back = shift_image(&shift_image(&img, dx, dy).unwrap(), -dx, -dy).unwrap();
            let (mx, my) = (dx.unsigned_abs() as usize, dy.unsigned_abs() as usize);
            for r in my..h.saturating_sub(my) {
                for c in mx..w.saturating_sub(mx) {
                    prop_assert_eq!(back.get(r, c, 0), img.get(r, c, 0));
                }
            }
        }
    }
}
