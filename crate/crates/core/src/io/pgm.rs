//! Binary PGM (`P5`) grayscale images, 8 or 16 bits per sample.

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::scalar::Scalar;
use crate::spt::Image;

fn header_tokens(bytes: &[u8]) -> Result<([usize; 3], usize), FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FormatError::BadMagic {
            expected: "P5".into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned(),
        });
    }
    let mut pos = 2;
    let mut vals = [0usize; 3];
    for v in &mut vals {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(FormatError::Pgm("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *v = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::Pgm(format!("bad header number at byte {start}")))?;
    }
    // exactly one whitespace byte before the raster
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => Ok((vals, pos + 1)),
        _ => Err(FormatError::Pgm("missing whitespace after maxval".into())),
    }
}

/// Decode to a single-channel image scaled to `[0, 1]` by the max value.
pub fn decode_pgm<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    let ([width, height, maxval], start) = header_tokens(bytes)?;
    if width == 0 || height == 0 {
        return Err(FormatError::Pgm("zero-sized image".into()).into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(FormatError::Pgm(format!("maxval {maxval} out of range")).into());
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let n = width * height;
    let raster = &bytes[start..];
    if raster.len() < n * bps {
        return Err(FormatError::Truncated {
            offset: start,
            needed: n * bps,
            available: raster.len(),
        }
        .into());
    }
    if raster.len() > n * bps {
        return Err(FormatError::TrailingBytes(raster.len() - n * bps).into());
    }
    let scale = 1.0 / maxval as f64;
    let data = (0..n)
        .map(|i| {
            let s = if bps == 1 {
                raster[i] as usize
            } else {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
            };
            if s > maxval {
                Err(FormatError::Pgm(format!("sample {s} exceeds maxval {maxval}")))
            } else {
                Ok(T::of(s as f64 * scale))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Image::from_vec(height, width, 1, data)
}

/// Encode raw samples (row-major, `≤ maxval`).
pub fn encode_pgm(width: usize, height: usize, maxval: u16, samples: &[u16]) -> Result<Vec<u8>> {
    if samples.len() != width * height {
        return Err(Error::dims("encode_pgm", "sample count differs from width*height"));
    }
    if maxval == 0 || samples.iter().any(|&s| s > maxval) {
        return Err(FormatError::Pgm("sample above maxval".into()).into());
    }
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    for &s in samples {
        if maxval < 256 {
            out.push(s as u8);
        } else {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn load_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| e.at(path))
}
