//! Scalar abstraction shared by the numerical layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::FftNum;

/// Floating point type the spectral, network and runtime code is generic over.
///
/// Only `f32` and `f64` implement it. Training and all file formats use `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + FftNum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; constants and configuration values enter through here.
    fn of(x: f64) -> Self;

    /// Widening conversion for reporting and serialization.
    fn to_f64_lossy(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// `C ← A·B + beta·C` for `A` m×k, `B` k×n, all row-major and contiguous.
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        gemm_strided(m, k, n, (a, k, 1), (b, n, 1), beta, c);
    }

    /// Raw kernel behind [`Scalar::gemm`]; strides are (row, column).
    #[doc(hidden)]
    unsafe fn gemm_kernel(
        m: usize,
        k: usize,
        n: usize,
        a: (*const Self, isize, isize),
        b: (*const Self, isize, isize),
        beta: Self,
        c: (*mut Self, isize, isize),
    );
}

/// Strided matrix product with every access bounds-checked up front.
/// Operands are `(data, row stride, column stride)`; `C` is row-major m×n.
pub fn gemm_strided<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: (&[T], usize, usize),
    b: (&[T], usize, usize),
    beta: T,
    c: &mut [T],
) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v = *v * beta);
        return;
    }
    assert!(last(m, k, a.1, a.2) < a.0.len() && last(k, n, b.1, b.2) < b.0.len());
    // SAFETY: every index the kernel touches was checked against the slice lengths above
    unsafe {
        T::gemm_kernel(
            m,
            k,
            n,
            (a.0.as_ptr(), a.1 as isize, a.2 as isize),
            (b.0.as_ptr(), b.1 as isize, b.2 as isize),
            beta,
            (c.as_mut_ptr(), n as isize, 1),
        );
    }
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }

    unsafe fn gemm_kernel(
        m: usize,
        k: usize,
        n: usize,
        a: (*const Self, isize, isize),
        b: (*const Self, isize, isize),
        beta: Self,
        c: (*mut Self, isize, isize),
    ) {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.0, a.1, a.2, b.0, b.1, b.2, beta, c.0, c.1, c.2,
        );
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }

    unsafe fn gemm_kernel(
        m: usize,
        k: usize,
        n: usize,
        a: (*const Self, isize, isize),
        b: (*const Self, isize, isize),
        beta: Self,
        c: (*mut Self, isize, isize),
    ) {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.0, a.1, a.2, b.0, b.1, b.2, beta, c.0, c.1, c.2,
        );
    }
}

/// Wraps a phase expressed in cycles into `[-0.5, 0.5)`.
pub fn wrap_phase<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let w = x - (x + half).floor();
    // x + 0.5 may round up to an integer for x just below 0.5
    if w >= half {
        w - T::one()
    } else {
        w
    }
}
