//! File formats: `VTRW` weights, `VTRT` tensors, PGM images, trace bundles
//! and the fixture manifest. All binary data is little-endian except PGM
//! samples, which are big-endian.

mod bytes;
mod manifest;
mod pgm;
mod trace;
mod vtrt;
mod vtrw;

use std::path::Path;

pub use manifest::{load_manifest, FixtureCase, Manifest, Tolerances, MANIFEST_FILE};
pub use pgm::{decode_pgm, encode_pgm, load_pgm};
pub use trace::{read_trace, stage_file, write_trace};
pub use vtrt::{decode_tensor, encode_tensor, load_tensor, save_tensor, Tensor, DTYPE_F32, VTRT_MAGIC};
pub use vtrw::{decode_weights, encode_weights, load_weights, save_weights, VTRW_MAGIC, VTRW_VERSION};

use crate::error::{Error, FormatError, Result};
use crate::scalar::Scalar;
use crate::spt::Image;

/// Decode an image from `VTRT` or PGM bytes, chosen by the leading magic.
pub fn decode_image<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    if bytes.starts_with(VTRT_MAGIC) {
        decode_tensor(bytes)?.to_image()
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(FormatError::BadMagic {
            expected: "VTRT or P5".into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        }
        .into())
    }
}

pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| e.at(path))
}
