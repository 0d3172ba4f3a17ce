//! Reference inference engine for a vision transformer with shifted patch
//! tokenization and locality self-attention, plus a functional and timing
//! simulator of a head-parallel block-matrix accelerator for it.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the working precision of `f32`.

pub mod accel;
pub mod error;
pub mod io;
pub mod model;
pub mod scalar;
pub mod spt;
pub mod tensor;
pub mod validate;

pub use error::{Error, FormatError, Result};
pub use scalar::Scalar;

pub type Matrix32 = tensor::Matrix<f32>;
pub type Matrix64 = tensor::Matrix<f64>;
pub type BlockedMatrix32 = tensor::BlockedMatrix<f32>;
pub type Image32 = spt::Image<f32>;
pub type WeightSet32 = model::WeightSet<f32>;
pub type WeightSet64 = model::WeightSet<f64>;
pub type Logits32 = model::Logits<f32>;
pub type ActivationTrace32 = model::ActivationTrace<f32>;
