//! `VTRT` single-tensor container.
//!
//! ```text
//! "VTRT"  u32 rank  u32 dims[rank]  u32 dtype (1 = f32)  f32 payload[prod(dims)]
//! ```
//!
//! All integers and floats little-endian, payload row-major. Nothing may
//! follow the payload.

use std::path::Path;

use super::bytes::{element_count, put_f32s, put_u32, to_u32, Reader};
use crate::error::{Error, FormatError, Result};
use crate::scalar::Scalar;
use crate::spt::Image;
use crate::tensor::Matrix;

pub const VTRT_MAGIC: &[u8; 4] = b"VTRT";
pub const DTYPE_F32: u32 = 1;

/// Dense row-major f32 tensor of any rank.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let n = element_count(&dims)?;
        if n != values.len() {
            return Err(FormatError::ShapeMismatch(format!(
                "dims {dims:?} need {n} values, got {}",
                values.len()
            ))
            .into());
        }
        Ok(Self { dims, values })
    }

    pub fn from_matrix<T: Scalar>(m: &Matrix<T>) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            values: m.data().iter().map(|v| v.as_f64() as f32).collect(),
        }
    }

    /// Rank-3 `[H, W, C]` tensor.
    pub fn from_image<T: Scalar>(img: &Image<T>) -> Self {
        Self {
            dims: vec![img.height(), img.width(), img.channels()],
            values: img.data().iter().map(|v| v.as_f64() as f32).collect(),
        }
    }

    /// Rank 2 as is, rank 1 as a row vector.
    pub fn to_matrix<T: Scalar>(&self) -> Result<Matrix<T>> {
        let (r, c) = match self.dims[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => {
                return Err(FormatError::ShapeMismatch(format!(
                    "expected a rank-1 or rank-2 tensor, got dims {:?}",
                    self.dims
                ))
                .into())
            }
        };
        Matrix::from_vec(r, c, self.values.iter().map(|&v| T::of(v as f64)).collect())
    }

    /// Rank 3 as `[H, W, C]`, rank 2 as a single-channel `[H, W]`.
    pub fn to_image<T: Scalar>(&self) -> Result<Image<T>> {
        let (h, w, c) = match self.dims[..] {
            [h, w] => (h, w, 1),
            [h, w, c] => (h, w, c),
            _ => {
                return Err(FormatError::ShapeMismatch(format!(
                    "expected a rank-2 or rank-3 image tensor, got dims {:?}",
                    self.dims
                ))
                .into())
            }
        };
        Image::from_vec(h, w, c, self.values.iter().map(|&v| T::of(v as f64)).collect())
    }
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * t.dims.len() + 4 * t.values.len());
    out.extend_from_slice(VTRT_MAGIC);
    put_u32(&mut out, to_u32(t.dims.len(), "rank")?);
    for &d in &t.dims {
        put_u32(&mut out, to_u32(d, "dim")?);
    }
    put_u32(&mut out, DTYPE_F32);
    put_f32s(&mut out, t.values.iter().copied());
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    r.magic(VTRT_MAGIC)?;
    let rank = r.u32()? as usize;
    let dims = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let dtype = r.u32()?;
    if dtype != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype(dtype).into());
    }
    let n = element_count(&dims)?;
    let values = r.f32s(n)?;
    r.finish()?;
    Ok(Tensor { dims, values })
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(t).map_err(|e| e.at(path))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let b = encode_tensor(&t).unwrap();
        let mut expect = b"VTRT".to_vec();
        for w in [2u32, 2, 1, 1] {
            expect.extend_from_slice(&w.to_le_bytes());
        }
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(b, expect);
        assert_eq!(decode_tensor(&b).unwrap(), t);
    }

    #[test]
    fn malformed_classes() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let good = encode_tensor(&t).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor(&bad).unwrap_err().format_error(), Some(FormatError::BadMagic { .. })));

        let short = &good[..good.len() - 1];
        assert!(matches!(decode_tensor(short).unwrap_err().format_error(), Some(FormatError::Truncated { .. })));

        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_tensor(&long).unwrap_err().format_error(), Some(&FormatError::TrailingBytes(1)));

        let mut dtype = good.clone();
        dtype[12..16].copy_from_slice(&7u32.to_le_bytes());
        assert_eq!(decode_tensor(&dtype).unwrap_err().format_error(), Some(&FormatError::UnsupportedDtype(7)));
    }

    #[test]
    fn image_and_matrix_views() {
        let img = Image::<f32>::from_fn(3, 2, 2, |r, c, ch| (r * 4 + c * 2 + ch) as f32);
        let t = Tensor::from_image(&img);
        assert_eq!(t.dims, vec![3, 2, 2]);
        assert_eq!(t.to_image::<f32>().unwrap(), img);
        assert!(t.to_matrix::<f32>().is_err());
        let m = Matrix::<f64>::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        assert_eq!(Tensor::from_matrix(&m).to_matrix::<f64>().unwrap(), m);
    }
}
