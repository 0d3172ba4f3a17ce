//! Element-wise compute unit: `f(A ⊙ B ⊕ C)` over equally sized operands,
//! one element per lane per cycle across all `p_h·p_t·p_c·p_pe²` lanes.

use super::AccelConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ewise_ref, Activation, Matrix};

/// Cycles for one element-wise pass over a `rows × cols` operand, padded
/// to whole tiles.
pub fn ecu_cycles(rows: usize, cols: usize, cfg: &AccelConfig) -> u64 {
    let b = cfg.block;
    let padded = (rows.div_ceil(b) * b * cols.div_ceil(b) * b) as u64;
    padded.div_ceil(cfg.lanes())
}

pub fn ecu_op<T: Scalar>(
    f: Activation,
    a: &Matrix<T>,
    mul: Option<&Matrix<T>>,
    add: Option<&Matrix<T>>,
    cfg: &AccelConfig,
) -> Result<(Matrix<T>, u64)> {
    if a.is_empty() {
        return Err(Error::EmptyOperand("ecu_op"));
    }
    let out = ewise_ref(f, mul, add, a)?;
    Ok((out, ecu_cycles(a.rows(), a.cols(), cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_examples() {
        let cfg = AccelConfig::default();
        assert_eq!(ecu_cycles(122, 44, &cfg), 1);
        assert_eq!(ecu_cycles(122, 352, &cfg), (128 * 352u64).div_ceil(6144));
        assert_eq!(ecu_cycles(1, 1, &cfg), 1);
    }

    #[test]
    fn matches_reference_bitwise() {
        let cfg = AccelConfig::default();
        let a = Matrix::<f32>::from_fn(7, 9, |r, c| (r as f32 - 3.0) * 0.4 + c as f32 * 0.1);
        let b = Matrix::<f32>::from_fn(7, 9, |r, c| 1.0 + (r * c) as f32 * 0.01);
        let c = Matrix::<f32>::from_fn(7, 9, |r, _| -(r as f32) * 0.3);
        for f in [Activation::Identity, Activation::Gelu, Activation::Exp] {
            let (out, cycles) = ecu_op(f, &a, Some(&b), Some(&c), &cfg).unwrap();
            assert_eq!(out, ewise_ref(f, Some(&b), Some(&c), &a).unwrap());
            assert_eq!(cycles, 1);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let cfg = AccelConfig::default();
        assert!(matches!(
            ecu_op(Activation::Identity, &Matrix::<f32>::zeros(0, 3), None, None, &cfg),
            Err(Error::EmptyOperand(_))
        ));
        let a = Matrix::<f32>::zeros(2, 2);
        assert!(ecu_op(Activation::Exp, &a, Some(&Matrix::zeros(2, 3)), None, &cfg).is_err());
    }
}
