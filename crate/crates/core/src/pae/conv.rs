//! Same-length, zero-padded 1-D convolution and ELU, with their adjoints.
//!
//! `y[o][t] = b[o] + Σ_i Σ_m w[o][i][m] · x[i][t + m − r]`, `r = (k − 1) / 2`,
//! taps falling outside `[0, H)` read zero.

use super::params::Conv1d;
use crate::matrix::Matrix;
use crate::scalar::{gemm_strided, Scalar};

/// Output range `t` for which tap `m` reads a valid input sample.
#[inline]
fn valid_range(m: usize, r: usize, h: usize) -> Option<(usize, usize)> {
    let lo = r.saturating_sub(m);
    let hi = (h + r).saturating_sub(m).min(h);
    (lo < hi).then_some((lo, hi))
}

/// Unfolds `x` into an `(in·k) × H` matrix whose row `i·k + m` holds input
/// `i` shifted by `m − r`, so the convolution becomes one matrix product.
fn im2col<T: Scalar>(x: &Matrix<T>, k: usize) -> Vec<T> {
    let (n_in, h) = x.shape();
    let r = k / 2;
    let mut col = vec![T::zero(); n_in * k * h];
    for i in 0..n_in {
        let xin = x.row(i);
        for m in 0..k {
            let Some((lo, hi)) = valid_range(m, r, h) else {
                continue;
            };
            let row = (i * k + m) * h;
            col[row + lo..row + hi].copy_from_slice(&xin[lo + m - r..hi + m - r]);
        }
    }
    col
}

pub fn conv_forward<T: Scalar>(conv: &Conv1d<T>, x: &Matrix<T>) -> Matrix<T> {
    debug_assert_eq!(x.rows(), conv.in_ch);
    let h = x.cols();
    let mut y = Matrix::zeros(conv.out_ch, h);
    for o in 0..conv.out_ch {
        y.row_mut(o).iter_mut().for_each(|v| *v = conv.bias[o]);
    }
    let col = im2col(x, conv.kernel);
    T::gemm(
        conv.out_ch,
        conv.in_ch * conv.kernel,
        h,
        &conv.weight,
        &col,
        T::one(),
        y.as_mut_slice(),
    );
    y
}

/// Accumulates weight/bias gradients into `grad` and, when asked, returns the
/// input gradient.
pub fn conv_backward<T: Scalar>(
    conv: &Conv1d<T>,
    x: &Matrix<T>,
    gy: &Matrix<T>,
    grad: &mut Conv1d<T>,
    want_input_grad: bool,
) -> Option<Matrix<T>> {
    let h = x.cols();
    let k = conv.kernel;
    let r = k / 2;
    let width = conv.in_ch * k;
    for o in 0..conv.out_ch {
        grad.bias[o] += gy.row(o).iter().copied().sum::<T>();
    }
    let col = im2col(x, k);
    // dW += gy · colᵀ
    gemm_strided(
        conv.out_ch,
        h,
        width,
        (gy.as_slice(), h, 1),
        (&col, 1, h),
        T::one(),
        &mut grad.weight,
    );
    if !want_input_grad {
        return None;
    }
    // dcol = Wᵀ · gy, folded back onto the input positions
    let mut gcol = vec![T::zero(); width * h];
    gemm_strided(
        width,
        conv.out_ch,
        h,
        (&conv.weight, 1, width),
        (gy.as_slice(), h, 1),
        T::zero(),
        &mut gcol,
    );
    let mut gx = Matrix::zeros(conv.in_ch, h);
    for i in 0..conv.in_ch {
        let gxi = gx.row_mut(i);
        for m in 0..k {
            let Some((lo, hi)) = valid_range(m, r, h) else {
                continue;
            };
            let row = &gcol[(i * k + m) * h..(i * k + m + 1) * h];
            for (dst, &g) in gxi[lo + m - r..hi + m - r].iter_mut().zip(&row[lo..hi]) {
                *dst += g;
            }
        }
    }
    Some(gx)
}

pub fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU applied elementwise.
pub fn elu_forward<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(elu)
}

/// `gy ⊙ elu'(pre)`.
pub fn elu_backward<T: Scalar>(pre: &Matrix<T>, gy: &Matrix<T>) -> Matrix<T> {
    let data = pre
        .as_slice()
        .iter()
        .zip(gy.as_slice())
        .map(|(&p, &g)| if p > T::zero() { g } else { g * p.exp() })
        .collect();
    Matrix::from_vec(pre.rows(), pre.cols(), data)
}
