use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Matrix product with k ascending per output element.
///
/// Each output element accumulates `a[i][0]·w[0][j] + a[i][1]·w[1][j] + …`
/// in order from zero, the same order as the block kernels, so results are
/// bit-identical to them. Rows are processed four at a time against
/// register-sized column strips.
pub fn naive_matmul<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != w.rows() {
        return Err(Error::dims(
            "naive_matmul",
            format!("{}x{} times {}x{}", a.rows(), a.cols(), w.rows(), w.cols()),
        ));
    }
    let mut out = Matrix::zeros(a.rows(), w.cols());
    if a.cols() > 0 {
        dispatch_kernel(a, w, &mut out);
    }
    Ok(out)
}

#[cfg(target_arch = "x86_64")]
fn dispatch_kernel<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>, out: &mut Matrix<T>) {
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        unsafe { kernel_avx2(a, w, out) }
    } else {
        kernel(a, w, out)
    }
}

#[cfg(not(target_arch = "x86_64"))]
fn dispatch_kernel<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>, out: &mut Matrix<T>) {
    kernel(a, w, out)
}

// Same code with wider vectors. FMA stays disabled so rounding is unchanged.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn kernel_avx2<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>, out: &mut Matrix<T>) {
    kernel(a, w, out)
}

#[inline(always)]
fn kernel<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>, out: &mut Matrix<T>) {
    let (m, kk, n) = (a.rows(), a.cols(), w.cols());
    let (ad, wd) = (a.data(), w.data());
    let od = out.data_mut();
    let mut panel = vec![T::zero(); kk * MR];
    let mut i = 0;
    while i + MR <= m {
        // k-major copy of rows i..i+MR
        for r in 0..MR {
            for (k, &v) in ad[(i + r) * kk..(i + r + 1) * kk].iter().enumerate() {
                panel[k * MR + r] = v;
            }
        }
        let mut j = 0;
        while j + NR <= n {
            strip::<T, NR>(&panel, wd, od, i, j, n);
            j += NR;
        }
        while j + NR / 2 <= n {
            strip::<T, { NR / 2 }>(&panel, wd, od, i, j, n);
            j += NR / 2;
        }
        for r in i..i + MR {
            row_tail(ad, wd, od, r, j, kk, n);
        }
        i += MR;
    }
    for r in i..m {
        row_tail(ad, wd, od, r, 0, kk, n);
    }
}

const MR: usize = 4;
const NR: usize = 16;

/// `MR × W` output tile at `(i, j)` held in registers over all k.
#[inline(always)]
fn strip<T: Scalar, const W: usize>(panel: &[T], w: &[T], out: &mut [T], i: usize, j: usize, n: usize) {
    let mut acc = [[T::zero(); W]; MR];
    let mut wr = [T::zero(); W];
    let mut ak = [T::zero(); MR];
    for (a_col, wrow) in panel.chunks_exact(MR).zip(w.chunks_exact(n)) {
        ak.copy_from_slice(a_col);
        wr.copy_from_slice(&wrow[j..j + W]);
        for r in 0..MR {
            for c in 0..W {
                acc[r][c] += ak[r] * wr[c];
            }
        }
    }
    for (r, acc_r) in acc.iter().enumerate() {
        out[(i + r) * n + j..(i + r) * n + j + W].copy_from_slice(acc_r);
    }
}

/// Columns `j0..n` of output row `r`, i-k-j order.
#[inline(always)]
fn row_tail<T: Scalar>(a: &[T], w: &[T], out: &mut [T], r: usize, j0: usize, kk: usize, n: usize) {
    if j0 == n {
        return;
    }
    let out_row = &mut out[r * n + j0..(r + 1) * n];
    for k in 0..kk {
        let aik = a[r * kk + k];
        for (o, &wv) in out_row.iter_mut().zip(&w[k * n + j0..(k + 1) * n]) {
            *o += aik * wv;
        }
    }
}

/// Element-wise non-linearity supported by the element-wise unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Gelu,
    Exp,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Gelu => gelu(x),
            Activation::Exp => x.exp(),
        }
    }
}

/// Exact GELU, `x · Φ(x)` with Φ written through erf.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    half * x * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// `f(a ⊙ mul ⊕ add)` with absent operands acting as identities.
pub fn ewise_ref<T: Scalar>(
    f: Activation,
    mul: Option<&Matrix<T>>,
    add: Option<&Matrix<T>>,
    a: &Matrix<T>,
) -> Result<Matrix<T>> {
    for m in [mul, add].into_iter().flatten() {
        if !m.same_shape(a) {
            return Err(Error::dims(
                "ewise",
                format!("operand {:?} vs {:?}", m.shape(), a.shape()),
            ));
        }
    }
    let mut out = a.clone();
    let data = out.data_mut();
    if let Some(m) = mul {
        for (x, &y) in data.iter_mut().zip(m.data()) {
            *x = *x * y;
        }
    }
    if let Some(c) = add {
        for (x, &y) in data.iter_mut().zip(c.data()) {
            *x = *x + y;
        }
    }
    if f != Activation::Identity {
        for x in data.iter_mut() {
            *x = f.apply(*x);
        }
    }
    Ok(out)
}
