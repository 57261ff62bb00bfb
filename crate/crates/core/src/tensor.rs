//! Dense 4-D tensors in `[n][c][h][w]` row-major order.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

use crate::{Error, Result};

/// Floating-point element type. `f32` is used for training and inference,
/// `f64` for gradient checks.
pub trait Real:
    Float + AddAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    /// `c = alpha · a·b + beta · c` on strided row-major matrices,
    /// `a: m×k`, `b: k×n`, `c: m×n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_row_stride: isize,
    );

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Hyperbolic tangent; may use a rational approximation accurate to a
    /// few ulp that the compiler can vectorize.
    fn tanh_approx(self) -> Self {
        self.tanh()
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!(
        rs >= 0 && cs >= 0 && (last as usize) < len,
        "matrix view out of bounds"
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path, $tanh:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_row_stride: isize,
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, (c_row_stride, 1));
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every element addressed by the three views was bounds
                // checked above and `c` is exclusively borrowed.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_row_stride,
                        1,
                    );
                }
            }

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline(always)]
            fn tanh_approx(self) -> Self {
                $tanh(self)
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm, tanh_rational);
impl_real!(f64, matrixmultiply::dgemm, f64::tanh);

/// Odd rational minimax approximation of tanh on `[-7.9053, 7.9053]`,
/// saturating outside; maximum absolute error about 4e-7.
#[inline(always)]
fn tanh_rational(x: f32) -> f32 {
    const CLAMP: f32 = 7.905_311;
    const A: [f32; 7] = [
        4.893_524_6e-3,
        6.372_619_3e-4,
        1.485_722_4e-5,
        5.122_297e-8,
        -8.604_672e-11,
        2.000_188e-13,
        -2.760_768_5e-16,
    ];
    const B: [f32; 4] = [4.893_525e-3, 2.268_434_6e-3, 1.185_347_1e-4, 1.198_258_4e-6];
    let x = x.clamp(-CLAMP, CLAMP);
    let x2 = x * x;
    let mut p = A[6];
    for &a in A[..6].iter().rev() {
        p = p * x2 + a;
    }
    let mut q = B[3];
    for &b in B[..3].iter().rev() {
        q = q * x2 + b;
    }
    x * p / q
}

/// `v^q` by repeated multiplication, left to right.
///
/// Every power map in the crate goes through this function so that cached
/// and recomputed powers agree bitwise.
#[inline(always)]
pub fn int_pow<T: Real>(v: T, q: usize) -> T {
    let mut acc = v;
    for _ in 1..q {
        acc *= v;
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T = f32> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self::filled(n, c, h, w, T::zero())
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: T) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![value; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::invalid(format!(
                "buffer of length {} cannot hold a {n}x{c}x{h}x{w} tensor",
                data.len()
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn from_fn(
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize) -> T,
    ) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: (0..n * c * h * w).map(&mut f).collect(),
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of elements in one batch entry.
    #[inline]
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn item(&self, i: usize) -> &[T] {
        let len = self.item_len();
        &self.data[i * len..(i + 1) * len]
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[((n * self.c + c) * self.h + h) * self.w + w]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let idx = ((n * self.c + c) * self.h + h) * self.w + w;
        self.data[idx] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        ensure_same_shape(self, other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

pub(crate) fn ensure_same_shape<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>, op: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// Element-wise `t^q` for `q ≥ 1`.
pub fn elementwise_power<T: Real>(t: &Tensor4<T>, q: usize) -> Result<Tensor4<T>> {
    if q == 0 {
        return Err(Error::invalid("power order must be at least 1"));
    }
    Ok(t.map(|v| int_pow(v, q)))
}

/// Clamp every element into `[0, 1]`.
pub fn clip01<T: Real>(t: &Tensor4<T>) -> Tensor4<T> {
    t.map(clip_scalar)
}

#[inline]
pub(crate) fn clip_scalar<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

/// `a·x + b·y`.
pub fn linear_combine<T: Real>(a: T, x: &Tensor4<T>, b: T, y: &Tensor4<T>) -> Result<Tensor4<T>> {
    ensure_same_shape(x, y, "linear_combine")?;
    Ok(Tensor4 {
        n: x.n,
        c: x.c,
        h: x.h,
        w: x.w,
        data: x
            .data
            .iter()
            .zip(&y.data)
            .map(|(&xv, &yv)| a * xv + b * yv)
            .collect(),
    })
}
