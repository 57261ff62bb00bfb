//! Small vector loops used by the direct convolution path and activations.
//!
//! Each loop has a portable body that is also compiled with AVX2 enabled
//! and picked at runtime. Both variants perform the same operations in the
//! same order, so results do not depend on the CPU feature level.

use crate::tensor::Real;

const LANES: usize = 8;

macro_rules! dispatch {
    ($(#[$doc:meta])* fn $name:ident<$t:ident>($($arg:ident: $ty:ty),*) $(-> $ret:ty)? => $body:ident, $avx:ident) => {
        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn $avx<$t: Real>($($arg: $ty),*) $(-> $ret)? {
            $body($($arg),*)
        }

        $(#[$doc])*
        pub(crate) fn $name<$t: Real>($($arg: $ty),*) $(-> $ret)? {
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2.
                return unsafe { $avx($($arg),*) };
            }
            $body($($arg),*)
        }
    };
}

#[inline(always)]
fn stencil_body<T: Real>(out: &mut [T], input: &[T], taps: &[(T, usize)]) {
    let n = out.len();
    if let Some(&(_, max_off)) = taps.iter().max_by_key(|(_, off)| *off) {
        assert!(input.len() >= max_off + n, "stencil input too short");
    }
    let mut i = 0;
    while i + LANES <= n {
        let mut acc = [T::zero(); LANES];
        acc.copy_from_slice(&out[i..i + LANES]);
        for &(w, off) in taps {
            let src = &input[off + i..off + i + LANES];
            for l in 0..LANES {
                acc[l] += w * src[l];
            }
        }
        out[i..i + LANES].copy_from_slice(&acc);
        i += LANES;
    }
    for j in i..n {
        let mut a = out[j];
        for &(w, off) in taps {
            a += w * input[off + j];
        }
        out[j] = a;
    }
}

#[inline(always)]
fn dot_body<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    for (l, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        acc[l] += x * y;
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

#[inline(always)]
fn tanh_body<T: Real>(src: &[T], dst: &mut [T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = T::tanh_approx(s);
    }
}

dispatch! {
    /// `out[i] += Σ w · input[i + off]` over `taps`, taps applied in order.
    fn stencil<T>(out: &mut [T], input: &[T], taps: &[(T, usize)]) => stencil_body, stencil_avx2
}

dispatch! {
    /// Dot product of the common prefix with eight fixed partial sums.
    fn dot<T>(a: &[T], b: &[T]) -> T => dot_body, dot_avx2
}

dispatch! {
    /// Elementwise hyperbolic tangent.
    fn tanh_into<T>(src: &[T], dst: &mut [T]) => tanh_body, tanh_avx2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_matches_scalar_loop() {
        let input: Vec<f64> = (0..40).map(|v| (v as f64 * 0.37).sin()).collect();
        let taps = [(0.5, 0), (-1.25, 3), (2.0, 7)];
        let mut out: Vec<f64> = (0..27).map(|v| v as f64).collect();
        let mut expected = out.clone();
        for (i, e) in expected.iter_mut().enumerate() {
            for &(w, off) in &taps {
                *e += w * input[i + off];
            }
        }
        stencil(&mut out, &input, &taps);
        assert_eq!(out, expected);
        assert_eq!(stencil_body_copy(&taps, &input), expected);
    }

    fn stencil_body_copy(taps: &[(f64, usize)], input: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..27).map(|v| v as f64).collect();
        stencil_body(&mut out, input, taps);
        out
    }

    #[test]
    fn dot_handles_remainders() {
        for n in [0usize, 1, 7, 8, 9, 23] {
            let a: Vec<f64> = (0..n).map(|v| v as f64 + 1.0).collect();
            let b = vec![2.0; n];
            assert_eq!(dot(&a, &b), (n * (n + 1)) as f64);
            assert_eq!(dot(&a, &b), dot_body(&a, &b));
        }
    }

    #[test]
    fn tanh_matches_reference() {
        let src: Vec<f32> = (-400..=400).map(|v| v as f32 * 0.025).collect();
        let mut dst = vec![0.0; src.len()];
        tanh_into(&src, &mut dst);
        for (&x, &y) in src.iter().zip(&dst) {
            assert!((y - x.tanh()).abs() <= 5e-7, "tanh({x}) = {y}");
            assert!(y.abs() <= 1.0);
        }
    }
}
