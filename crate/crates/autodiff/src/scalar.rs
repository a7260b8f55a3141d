use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rayon::prelude::*;

/// Floating point element type of a tensor. Implemented for `f32` (training) and
/// `f64` (gradient verification).
pub trait Scalar:
    Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn erf(self) -> Self;

    /// # Safety
    /// Same contract as `matrixmultiply::sgemm`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_kernel(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn erf(self) -> Self {
        libm::erff(self)
    }
    unsafe fn gemm_kernel(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn erf(self) -> Self {
        libm::erf(self)
    }
    unsafe fn gemm_kernel(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

// Row chunk size for parallel GEMM. Fixed so results do not depend on the
// number of worker threads.
const GEMM_ROW_CHUNK: usize = 64;
const GEMM_PAR_WORK: usize = 1 << 18;

/// `c (m×n) = op(a) · op(b)` (or `+=` when `accumulate`), all row-major.
///
/// `a` is stored as `m×k`, or `k×m` when `a_t`; `b` as `k×n`, or `n×k` when `b_t`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|x| *x = T::zero());
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let run = |rows: usize, a_off: usize, c_chunk: &mut [T]| unsafe {
        T::gemm_kernel(
            rows,
            k,
            n,
            T::one(),
            a.as_ptr().add(a_off),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c_chunk.as_mut_ptr(),
            n as isize,
            1,
        )
    };
    if m * n * k >= GEMM_PAR_WORK && m > GEMM_ROW_CHUNK && rayon::current_num_threads() > 1 {
        c[..m * n]
            .par_chunks_mut(GEMM_ROW_CHUNK * n)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let r0 = ci * GEMM_ROW_CHUNK;
                let rows = chunk.len() / n;
                run(rows, r0 * rsa as usize, chunk);
            });
    } else {
        c[..m * n]
            .chunks_mut(GEMM_ROW_CHUNK * n)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let r0 = ci * GEMM_ROW_CHUNK;
                let rows = chunk.len() / n;
                run(rows, r0 * rsa as usize, chunk);
            });
    }
}
