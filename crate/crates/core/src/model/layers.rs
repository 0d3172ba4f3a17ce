//! Building blocks of the encoder.
//!
//! Each kernel is written as the same sequence of elementary operations the
//! accelerator simulator schedules (row sums accumulated from zero, scaling
//! by reciprocals, separate multiply and add), so the two paths agree
//! closely without sharing code.

use super::{EncoderWeights, LayerNormParams, Linear, VtrConfig, MASK_SENTINEL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gelu, naive_matmul, Matrix};

/// Row-wise `(x − μ)/sqrt(σ² + ε)` before the affine step.
pub fn layer_norm_pre_affine<T: Scalar>(x: &Matrix<T>, eps: T) -> Matrix<T> {
    let n = x.cols();
    let inv_n = T::one() / T::of(n as f64);
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let sum = row.iter().fold(T::zero(), |acc, &v| acc + v);
        let mean = sum * inv_n;
        for v in row.iter_mut() {
            *v = *v - mean;
        }
        let sq = row.iter().fold(T::zero(), |acc, &v| acc + v * v);
        let var = sq * inv_n;
        let rstd = T::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = *v * rstd;
        }
    }
    out
}

/// Layer normalization over each row (population variance).
pub fn layer_norm<T: Scalar>(x: &Matrix<T>, p: &LayerNormParams<T>, eps: T) -> Result<Matrix<T>> {
    if p.gamma.len() != x.cols() || p.beta.len() != x.cols() {
        return Err(Error::dims(
            "layer_norm",
            format!("params of length {} for {} columns", p.gamma.len(), x.cols()),
        ));
    }
    let mut out = layer_norm_pre_affine(x, eps);
    for r in 0..out.rows() {
        for ((v, &g), &b) in out.row_mut(r).iter_mut().zip(&p.gamma).zip(&p.beta) {
            *v = *v * g + b;
        }
    }
    Ok(out)
}

pub fn linear<T: Scalar>(x: &Matrix<T>, lin: &Linear<T>) -> Result<Matrix<T>> {
    if lin.bias.len() != lin.out_dim() {
        return Err(Error::dims("linear", "bias length differs from output width"));
    }
    let mut y = naive_matmul(x, &lin.weight)?;
    for r in 0..y.rows() {
        for (v, &b) in y.row_mut(r).iter_mut().zip(&lin.bias) {
            *v = *v + b;
        }
    }
    Ok(y)
}

/// `GELU(x·W₁ + b₁)·W₂ + b₂` with exact GELU.
pub fn mlp_block<T: Scalar>(x: &Matrix<T>, fc1: &Linear<T>, fc2: &Linear<T>) -> Result<Matrix<T>> {
    if fc1.out_dim() != fc2.in_dim() {
        return Err(Error::dims("mlp_block", "hidden widths of fc1 and fc2 differ"));
    }
    let h = linear(x, fc1)?.map(gelu);
    linear(&h, fc2)
}

/// Row softmax with max subtraction, normalized by the reciprocal row sum.
pub fn softmax_rows<T: Scalar>(x: &mut Matrix<T>) {
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        let m = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        for v in row.iter_mut() {
            *v = (*v - m).exp();
        }
        let s = row.iter().fold(T::zero(), |a, &v| a + v);
        let inv = T::one() / s;
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
}

pub struct AttentionOutput<T> {
    /// Per-head score matrices stacked vertically, head-major:
    /// `(heads · T) × T`.
    pub scores: Matrix<T>,
    /// `O · W_p + b_p`, `T × D`.
    pub output: Matrix<T>,
}

/// Locality self-attention: per-head `Q_h K_hᵀ`, scaled by `1/λ`, diagonal
/// replaced by the mask sentinel, softmax, weighted values, heads
/// concatenated and projected.
pub fn lsa_attention<T: Scalar>(
    z: &Matrix<T>,
    layer: &EncoderWeights<T>,
    cfg: &VtrConfig,
    layer_index: usize,
) -> Result<AttentionOutput<T>> {
    let d = cfg.hidden_dim;
    if z.cols() != d {
        return Err(Error::dims(
            "lsa_attention",
            format!("input has {} columns, hidden dim is {d}", z.cols()),
        ));
    }
    if !(layer.temperature > T::zero()) {
        return Err(Error::NonPositiveTemperature {
            layer: layer_index,
            value: layer.temperature.as_f64(),
        });
    }
    let q = linear(z, &layer.wq)?;
    let k = linear(z, &layer.wk)?;
    let v = linear(z, &layer.wv)?;
    let dk = cfg.head_dim();
    let inv_lambda = T::one() / layer.temperature;
    let sentinel = T::of(MASK_SENTINEL);

    let mut score_blocks = Vec::with_capacity(cfg.heads);
    let mut head_outputs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let (lo, hi) = (h * dk, (h + 1) * dk);
        let kt = k.col_slice(lo, hi).transpose();
        let mut a = naive_matmul(&q.col_slice(lo, hi), &kt)?;
        for r in 0..a.rows() {
            let row = a.row_mut(r);
            for x in row.iter_mut() {
                *x = *x * inv_lambda;
            }
            row[r] = sentinel;
        }
        softmax_rows(&mut a);
        head_outputs.push(naive_matmul(&a, &v.col_slice(lo, hi))?);
        score_blocks.push(a);
    }
    let o = Matrix::hcat(&head_outputs)?;
    Ok(AttentionOutput {
        scores: Matrix::vcat(&score_blocks)?,
        output: linear(&o, &layer.proj)?,
    })
}

pub fn add<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.same_shape(b) {
        return Err(Error::dims("add", format!("{:?} + {:?}", a.shape(), b.shape())));
    }
    let mut out = a.clone();
    for (x, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *x = *x + y;
    }
    Ok(out)
}

/// Every intermediate of one encoder layer.
pub struct EncoderLayerOutput<T> {
    pub ln1: Matrix<T>,
    pub attn_scores: Matrix<T>,
    pub msa_out: Matrix<T>,
    pub res1: Matrix<T>,
    pub ln2: Matrix<T>,
    pub mlp_out: Matrix<T>,
    pub out: Matrix<T>,
}

/// Pre-norm encoder layer: `z' = z + MSA(LN(z))`, `out = z' + MLP(LN(z'))`.
pub fn encoder_layer<T: Scalar>(
    z: &Matrix<T>,
    layer: &EncoderWeights<T>,
    cfg: &VtrConfig,
    layer_index: usize,
) -> Result<EncoderLayerOutput<T>> {
    let eps = T::of(super::LN_EPS);
    let ln1 = layer_norm(z, &layer.ln1, eps)?;
    let attn = lsa_attention(&ln1, layer, cfg, layer_index)?;
    let res1 = add(z, &attn.output)?;
    let ln2 = layer_norm(&res1, &layer.ln2, eps)?;
    let mlp_out = mlp_block(&ln2, &layer.fc1, &layer.fc2)?;
    let out = add(&res1, &mlp_out)?;
    Ok(EncoderLayerOutput {
        ln1,
        attn_scores: attn.scores,
        msa_out: attn.output,
        res1,
        ln2,
        mlp_out,
        out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_dense, LayerNormParams, WeightSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg(tokens_side: usize, d: usize, heads: usize) -> VtrConfig {
        let mut c = VtrConfig::square(tokens_side * 2, 2, d, 1, heads, 3);
        c.num_shifts = 0;
        c
    }

    #[test]
    fn layer_norm_examples() {
        let x = Matrix::from_rows(&[&[5.0f32, 5.0, 5.0, 5.0]]);
        let y = layer_norm(&x, &LayerNormParams::identity(4), 1e-6).unwrap();
        assert_eq!(y.data(), &[0.0; 4]);
        let x = Matrix::from_rows(&[&[1.0f64, -1.0]]);
        let y = layer_norm(&x, &LayerNormParams::identity(2), 1e-15).unwrap();
        assert!((y.get(0, 0) - 1.0).abs() < 1e-12 && (y.get(0, 1) + 1.0).abs() < 1e-12);
        assert!(layer_norm(&x, &LayerNormParams::identity(3), 1e-6).is_err());
    }

    #[test]
    fn layer_norm_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::<f32>::from_fn(121, 320, |_, _| rng.random_range(-3.0..5.0));
        let y = layer_norm_pre_affine(&x, 1e-6);
        for r in 0..y.rows() {
            let row = y.row(r);
            let mean: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / 320.0;
            let var: f64 = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 320.0;
            assert!(mean.abs() < 1e-5, "row {r} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-3, "row {r} std {}", var.sqrt());
        }
    }

    #[test]
    fn mlp_examples() {
        let fc1 = Linear { weight: Matrix::from_rows(&[&[1.0f64]]), bias: vec![0.0] };
        let fc2 = fc1.clone();
        let y = mlp_block(&Matrix::from_rows(&[&[1.0]]), &fc1, &fc2).unwrap();
        assert!((y.get(0, 0) - 0.841_344_746_068_543).abs() < 1e-12);

        let fc1 = Linear::<f32> { weight: Matrix::filled(3, 12, 0.3), bias: vec![0.0; 12] };
        let fc2 = Linear::<f32> { weight: Matrix::filled(12, 3, -0.2), bias: vec![0.0; 3] };
        let y = mlp_block(&Matrix::zeros(5, 3), &fc1, &fc2).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(mlp_block(&Matrix::zeros(5, 3), &fc1, &fc1).is_err());
    }

    #[test]
    fn two_tokens_force_swap() {
        // 2 tokens total: the class token plus one patch
        let mut cfg = tiny_cfg(1, 4, 1);
        cfg.image_height = 2;
        cfg.image_width = 2;
        assert_eq!(cfg.seq_len(), 2);
        let w = random_dense::<f64>(&cfg, 11, 0.7);
        let layer = &w.layers[0];
        let z = Matrix::from_fn(2, 4, |r, c| (r as f64 + 1.0) * (c as f64 - 1.5));
        let out = lsa_attention(&z, layer, &cfg, 0).unwrap();
        assert_eq!(out.scores.data(), &[0.0, 1.0, 1.0, 0.0]);
        let v = linear(&z, &layer.wv).unwrap();
        let swapped = Matrix::vcat(&[v.row_slice(1, 2), v.row_slice(0, 1)]).unwrap();
        let expect = linear(&swapped, &layer.proj).unwrap();
        assert_eq!(out.output, expect);
    }

    #[test]
    fn scores_are_row_stochastic_with_zero_diagonal() {
        let cfg = tiny_cfg(3, 8, 2);
        let w = random_dense::<f32>(&cfg, 5, 0.5);
        let t = cfg.seq_len();
        let z = Matrix::from_fn(t, 8, |r, c| ((r * 8 + c) as f32 * 0.7).sin());
        let out = lsa_attention(&z, &w.layers[0], &cfg, 0).unwrap();
        assert_eq!(out.scores.shape(), (2 * t, t));
        for r in 0..out.scores.rows() {
            let s: f64 = out.scores.row(r).iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(out.scores.get(r, r % t) < 1e-6);
        }
    }

    #[test]
    fn non_positive_temperature_rejected() {
        let cfg = tiny_cfg(2, 4, 1);
        let mut w = WeightSet::<f32>::zeros(&cfg);
        w.layers[0].temperature = 0.0;
        let z = Matrix::zeros(cfg.seq_len(), 4);
        assert!(matches!(
            lsa_attention(&z, &w.layers[0], &cfg, 0),
            Err(Error::NonPositiveTemperature { .. })
        ));
    }

    #[test]
    fn zero_weight_layer_is_residual_of_ln_function() {
        let cfg = tiny_cfg(2, 4, 2);
        let w = WeightSet::<f64>::zeros(&cfg);
        let z = Matrix::from_fn(cfg.seq_len(), 4, |r, c| (r * 3 + c) as f64);
        let out = encoder_layer(&z, &w.layers[0], &cfg, 0).unwrap();
        // all learned tensors zero: both blocks contribute exactly zero
        assert_eq!(out.out, z);
        // uniform softmax over the off-diagonal entries
        let t = cfg.seq_len() as f64;
        for r in 0..out.attn_scores.rows() {
            for c in 0..cfg.seq_len() {
                let expect = if r % cfg.seq_len() == c { 0.0 } else { 1.0 / (t - 1.0) };
                assert!((out.attn_scores.get(r, c) - expect).abs() < 1e-12);
            }
        }
    }
}
