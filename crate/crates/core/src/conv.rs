//! Same-padded, stride-1 2D cross-correlation and its gradients.
//!
//! `out[n][co][m][j] = bias[co] + Σ_ci Σ_r Σ_t w[co][ci][r][t] · x[n][ci][m+r-pad][j+t-pad]`
//! with zero padding. The kernel is not flipped.
//!
//! Each batch item is lowered to an im2col matrix of shape
//! `[cin·K·K][rows·W]` (processed in row bands for large images) and
//! multiplied with the `[cout][cin·K·K]` weight matrix. Items run in
//! parallel; cross-item reductions run sequentially in item order.

use crate::par;
use crate::simd;
use crate::tensor::{int_pow, Real, Tensor4};
use crate::{Error, Result};

/// Upper bound on the number of elements in one im2col band.
const BAND_ELEMS: usize = 1 << 16;

/// Layers with at most this many input or output channels are convolved
/// directly instead of through im2col + GEMM.
const DIRECT_MAX_CHANNELS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T = f32> {
    cout: usize,
    cin: usize,
    k: usize,
    /// `[cout][cin][k][k]`
    pub weights: Vec<T>,
    /// `[cout]`
    pub bias: Vec<T>,
}

impl<T: Real> ConvKernel<T> {
    pub fn zeros(cout: usize, cin: usize, k: usize) -> Result<Self> {
        Self::from_parts(
            cout,
            cin,
            k,
            vec![T::zero(); cout * cin * k * k],
            vec![T::zero(); cout],
        )
    }

    pub fn from_parts(
        cout: usize,
        cin: usize,
        k: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::invalid(format!("kernel size {k} must be odd")));
        }
        if weights.len() != cout * cin * k * k || bias.len() != cout {
            return Err(Error::invalid(format!(
                "kernel buffers ({} weights, {} biases) do not match {cout}x{cin}x{k}x{k}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(ConvKernel {
            cout,
            cin,
            k,
            weights,
            bias,
        })
    }

    /// Kernel that copies input channel `c` to output channel `c`.
    pub fn identity(channels: usize, k: usize) -> Result<Self> {
        let mut kernel = Self::zeros(channels, channels, k)?;
        let c = k / 2;
        for ch in 0..channels {
            let idx = kernel.weight_index(ch, ch, c, c);
            kernel.weights[idx] = T::one();
        }
        Ok(kernel)
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.cout
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.cin
    }

    #[inline]
    pub fn kernel_size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn same_padding(&self) -> usize {
        (self.k - 1) / 2
    }

    #[inline]
    pub fn weight_index(&self, co: usize, ci: usize, r: usize, t: usize) -> usize {
        ((co * self.cin + ci) * self.k + r) * self.k + t
    }
}

/// Geometry shared by the item-level kernels.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn band_rows(&self) -> usize {
        (BAND_ELEMS / (self.patch_len() * self.w).max(1)).clamp(1, self.h.max(1))
    }

    fn direct(&self, cout: usize) -> bool {
        self.cin.min(cout) <= DIRECT_MAX_CHANNELS
    }

    fn bands(&self) -> impl Iterator<Item = (usize, usize)> {
        let step = self.band_rows();
        let h = self.h;
        (0..h).step_by(step).map(move |r0| (r0, step.min(h - r0)))
    }
}

/// Fills `cols` (`[cin·K·K][rows·w]`) with `src^power` around output rows
/// `row0..row0+rows`, zero outside the image.
pub(crate) fn im2col_band<T: Real>(
    src: &[T],
    g: Geometry,
    row0: usize,
    rows: usize,
    power: usize,
    cols: &mut [T],
) {
    let Geometry { cin, h, w, k, pad } = g;
    let plen = rows * w;
    debug_assert_eq!(cols.len(), g.patch_len() * plen);
    for ci in 0..cin {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for r in 0..k {
            for t in 0..k {
                let j = (ci * k + r) * k + t;
                let dst = &mut cols[j * plen..(j + 1) * plen];
                // valid output columns n satisfy 0 <= n + t - pad < w
                let n_lo = pad.saturating_sub(t);
                let n_hi = (w + pad).saturating_sub(t).min(w);
                for m in 0..rows {
                    let out_row = &mut dst[m * w..(m + 1) * w];
                    let src_row = (row0 + m + r) as isize - pad as isize;
                    if src_row < 0 || src_row >= h as isize || n_lo >= n_hi {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[src_row as usize * w..(src_row as usize + 1) * w];
                    out_row[..n_lo].fill(T::zero());
                    out_row[n_hi..].fill(T::zero());
                    let s0 = n_lo + t - pad;
                    let seg = &srow[s0..s0 + (n_hi - n_lo)];
                    if power == 1 {
                        out_row[n_lo..n_hi].copy_from_slice(seg);
                    } else {
                        for (d, &s) in out_row[n_lo..n_hi].iter_mut().zip(seg) {
                            *d = int_pow(s, power);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_band`] with `power = 1`: scatters `cols` back into
/// `dst` by accumulation.
pub(crate) fn col2im_band_add<T: Real>(
    cols: &[T],
    g: Geometry,
    row0: usize,
    rows: usize,
    dst: &mut [T],
) {
    let Geometry { cin, h, w, k, pad } = g;
    let plen = rows * w;
    for ci in 0..cin {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for r in 0..k {
            for t in 0..k {
                let j = (ci * k + r) * k + t;
                let src = &cols[j * plen..(j + 1) * plen];
                let n_lo = pad.saturating_sub(t);
                let n_hi = (w + pad).saturating_sub(t).min(w);
                if n_lo >= n_hi {
                    continue;
                }
                for m in 0..rows {
                    let src_row = (row0 + m + r) as isize - pad as isize;
                    if src_row < 0 || src_row >= h as isize {
                        continue;
                    }
                    let drow = &mut plane[src_row as usize * w..(src_row as usize + 1) * w];
                    let s0 = n_lo + t - pad;
                    for (d, &s) in drow[s0..s0 + (n_hi - n_lo)]
                        .iter_mut()
                        .zip(&src[m * w + n_lo..m * w + n_hi])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// One input term of a (generative) convolution: the source map, the power
/// to raise it to on the fly, and the kernel applied to the result.
/// Stride between padded planes: `(h + k - 1) × (w + k - 1)` plus `k - 1`
/// trailing scratch elements read by the last wide row.
fn padded_stride(g: Geometry) -> usize {
    (g.h + g.k - 1) * (g.w + g.k - 1) + g.k - 1
}

/// Zero-padded copy of every channel plane.
fn pad_planes<T: Real>(src: &[T], power: usize, g: Geometry) -> Vec<T> {
    let (wp, stride) = (g.w + g.k - 1, padded_stride(g));
    let mut out = vec![T::zero(); g.cin * stride];
    for (plane, dst) in src.chunks_exact(g.h * g.w).zip(out.chunks_exact_mut(stride)) {
        for (row, drow) in plane.chunks_exact(g.w).zip(dst[g.pad * wp..].chunks_mut(wp)) {
            let seg = &mut drow[g.pad..g.pad + g.w];
            if power == 1 {
                seg.copy_from_slice(row);
            } else {
                for (d, &v) in seg.iter_mut().zip(row) {
                    *d = int_pow(v, power);
                }
            }
        }
    }
    out
}

/// Copies an `h × w` plane into rows of width `wp`, zeroing the tail.
fn widen<T: Real>(plane: &[T], w: usize, wp: usize, dst: &mut [T]) {
    for (row, drow) in plane.chunks_exact(w).zip(dst.chunks_exact_mut(wp)) {
        drow[..w].copy_from_slice(row);
        drow[w..].fill(T::zero());
    }
}

// The direct kernels work on "wide" rows of the padded width `wp` so that
// each kernel tap is one contiguous run: output `i = m·wp + n` reads padded
// input `i + r·wp + t`. The columns `n >= w` of a wide row are scratch.

fn taps<T: Real>(kernel: &ConvKernel<T>, co: usize, ci: usize, wp: usize, flip: bool, taps: &mut Vec<(T, usize)>) {
    let k = kernel.k;
    taps.clear();
    for r in 0..k {
        for t in 0..k {
            let w = kernel.weights[kernel.weight_index(co, ci, r, t)];
            let off = if flip { (k - 1 - r) * wp + (k - 1 - t) } else { r * wp + t };
            taps.push((w, off));
        }
    }
}

fn direct_forward_term<T: Real>(src: &[T], power: usize, kernel: &ConvKernel<T>, g: Geometry, out: &mut [T]) {
    let (w, hw) = (g.w, g.h * g.w);
    let wp = w + g.k - 1;
    let stride = padded_stride(g);
    let padded = pad_planes(src, power, g);
    let mut wide = vec![T::zero(); g.h * wp];
    let mut tap_buf = Vec::with_capacity(g.k * g.k);
    for co in 0..kernel.cout {
        let plane = &mut out[co * hw..(co + 1) * hw];
        widen(plane, w, wp, &mut wide);
        for ci in 0..g.cin {
            taps(kernel, co, ci, wp, false, &mut tap_buf);
            simd::stencil(&mut wide, &padded[ci * stride..(ci + 1) * stride], &tap_buf);
        }
        for (row, wrow) in plane.chunks_exact_mut(w).zip(wide.chunks_exact(wp)) {
            row.copy_from_slice(&wrow[..w]);
        }
    }
}

fn direct_grad_w<T: Real>(src: &[T], power: usize, gy: &[T], cout: usize, g: Geometry, gw: &mut [T]) {
    let (k, w, hw) = (g.k, g.w, g.h * g.w);
    let wp = w + k - 1;
    let stride = padded_stride(g);
    let span = g.h * wp;
    let padded = pad_planes(src, power, g);
    let mut wide = vec![T::zero(); span];
    for co in 0..cout {
        widen(&gy[co * hw..(co + 1) * hw], w, wp, &mut wide);
        for ci in 0..g.cin {
            let input = &padded[ci * stride..(ci + 1) * stride];
            for r in 0..k {
                for t in 0..k {
                    let off = r * wp + t;
                    gw[((co * g.cin + ci) * k + r) * k + t] += simd::dot(&wide, &input[off..off + span]);
                }
            }
        }
    }
}

/// The input gradient is a forward pass of the upstream gradient with the
/// kernel flipped and its channel axes swapped.
fn direct_grad_x<T: Real>(kernel: &ConvKernel<T>, gy: &[T], g: Geometry, gx: &mut [T]) {
    let (w, hw) = (g.w, g.h * g.w);
    let wp = w + g.k - 1;
    let gy_geom = Geometry { cin: kernel.cout, ..g };
    let stride = padded_stride(gy_geom);
    let padded = pad_planes(gy, 1, gy_geom);
    let mut wide = vec![T::zero(); g.h * wp];
    let mut tap_buf = Vec::with_capacity(g.k * g.k);
    for ci in 0..g.cin {
        let plane = &mut gx[ci * hw..(ci + 1) * hw];
        widen(plane, w, wp, &mut wide);
        for co in 0..kernel.cout {
            taps(kernel, co, ci, wp, true, &mut tap_buf);
            simd::stencil(&mut wide, &padded[co * stride..(co + 1) * stride], &tap_buf);
        }
        for (row, wrow) in plane.chunks_exact_mut(w).zip(wide.chunks_exact(wp)) {
            row.copy_from_slice(&wrow[..w]);
        }
    }
}

pub(crate) struct Term<'a, T> {
    pub src: &'a [T],
    pub power: usize,
    pub kernel: &'a ConvKernel<T>,
}

/// `out = bias + Σ_terms conv(src^power, kernel)` for one batch item.
/// The bias is taken from the first term's kernel.
pub(crate) fn forward_item<T: Real>(terms: &[Term<'_, T>], g: Geometry, out: &mut [T]) {
    let first = terms[0].kernel;
    let cout = first.cout;
    let hw = g.h * g.w;
    for (co, plane) in out.chunks_mut(hw).enumerate().take(cout) {
        plane.fill(first.bias[co]);
    }
    if g.direct(cout) {
        for term in terms {
            direct_forward_term(term.src, term.power, term.kernel, g, out);
        }
        return;
    }
    let plen_max = g.band_rows() * g.w;
    let mut cols = vec![T::zero(); g.patch_len() * plen_max];
    for (row0, rows) in g.bands() {
        let plen = rows * g.w;
        let cols = &mut cols[..g.patch_len() * plen];
        for term in terms {
            im2col_band(term.src, g, row0, rows, term.power, cols);
            T::gemm(
                cout,
                g.patch_len(),
                plen,
                T::one(),
                &term.kernel.weights,
                (g.patch_len() as isize, 1),
                cols,
                (plen as isize, 1),
                T::one(),
                &mut out[row0 * g.w..],
                hw as isize,
            );
        }
    }
}

/// Accumulates `∂/∂w` of one item into `gw` (`[cout][cin·K·K]`).
pub(crate) fn grad_w_item<T: Real>(
    src: &[T],
    power: usize,
    gy: &[T],
    cout: usize,
    g: Geometry,
    gw: &mut [T],
) {
    if g.direct(cout) {
        return direct_grad_w(src, power, gy, cout, g, gw);
    }
    let hw = g.h * g.w;
    let plen_max = g.band_rows() * g.w;
    let mut cols = vec![T::zero(); g.patch_len() * plen_max];
    for (row0, rows) in g.bands() {
        let plen = rows * g.w;
        let cols = &mut cols[..g.patch_len() * plen];
        im2col_band(src, g, row0, rows, power, cols);
        T::gemm(
            cout,
            plen,
            g.patch_len(),
            T::one(),
            &gy[row0 * g.w..],
            (hw as isize, 1),
            cols,
            (1, plen as isize),
            T::one(),
            gw,
            g.patch_len() as isize,
        );
    }
}

/// Per-channel sum of one item's upstream gradient.
pub(crate) fn grad_b_item<T: Real>(gy: &[T], cout: usize, hw: usize) -> Vec<T> {
    (0..cout)
        .map(|co| gy[co * hw..(co + 1) * hw].iter().copied().sum())
        .collect()
}

/// Accumulates the input gradient of one item into `gx`.
pub(crate) fn grad_x_item<T: Real>(kernel: &ConvKernel<T>, gy: &[T], g: Geometry, gx: &mut [T]) {
    if g.direct(kernel.cout) {
        return direct_grad_x(kernel, gy, g, gx);
    }
    let hw = g.h * g.w;
    let plen_max = g.band_rows() * g.w;
    let mut cols = vec![T::zero(); g.patch_len() * plen_max];
    for (row0, rows) in g.bands() {
        let plen = rows * g.w;
        let cols = &mut cols[..g.patch_len() * plen];
        T::gemm(
            g.patch_len(),
            kernel.cout,
            plen,
            T::one(),
            &kernel.weights,
            (1, g.patch_len() as isize),
            &gy[row0 * g.w..],
            (hw as isize, 1),
            T::zero(),
            cols,
            plen as isize,
        );
        col2im_band_add(cols, g, row0, rows, gx);
    }
}

fn check_pad(k: usize, pad: usize) -> Result<()> {
    if k % 2 == 0 {
        return Err(Error::invalid(format!("kernel size {k} must be odd")));
    }
    if pad != (k - 1) / 2 {
        return Err(Error::invalid(format!(
            "padding {pad} is not same-padding for kernel size {k}"
        )));
    }
    Ok(())
}

pub(crate) fn geometry<T: Real>(x: &Tensor4<T>, k: usize, pad: usize) -> Geometry {
    Geometry {
        cin: x.channels(),
        h: x.height(),
        w: x.width(),
        k,
        pad,
    }
}

pub fn conv2d_forward<T: Real>(x: &Tensor4<T>, k: &ConvKernel<T>, pad: usize) -> Result<Tensor4<T>> {
    check_pad(k.k, pad)?;
    if k.cin != x.channels() {
        return Err(Error::invalid(format!(
            "kernel expects {} input channels, tensor has {}",
            k.cin,
            x.channels()
        )));
    }
    let g = geometry(x, k.k, pad);
    let mut out = Tensor4::zeros(x.batch(), k.cout, x.height(), x.width());
    let out_len = out.item_len();
    par::for_each_chunk_mut(out.as_mut_slice(), out_len, |i, dst| {
        let terms = [Term {
            src: x.item(i),
            power: 1,
            kernel: k,
        }];
        forward_item(&terms, g, dst);
    });
    Ok(out)
}

/// Gradients of `Σ gy ⊙ conv2d_forward(x, ·)` with respect to the weights
/// (`[cout][cin][K][K]`) and bias (`[cout]`).
pub fn conv2d_grad_wb<T: Real>(
    x: &Tensor4<T>,
    gy: &Tensor4<T>,
    k: usize,
    pad: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    check_pad(k, pad)?;
    if x.batch() != gy.batch() || x.height() != gy.height() || x.width() != gy.width() {
        return Err(Error::invalid(format!(
            "input {:?} and upstream gradient {:?} disagree on batch or spatial size",
            x.shape(),
            gy.shape()
        )));
    }
    let g = geometry(x, k, pad);
    let cout = gy.channels();
    Ok(reduce_grad_wb(x.batch(), cout, g, |i| (x.item(i), 1, gy.item(i))))
}

/// Runs the per-item weight/bias gradient in parallel and sums in item order.
pub(crate) fn reduce_grad_wb<'a, T: Real>(
    batch: usize,
    cout: usize,
    g: Geometry,
    item: impl Fn(usize) -> (&'a [T], usize, &'a [T]) + Sync + Send,
) -> (Vec<T>, Vec<T>) {
    let hw = g.h * g.w;
    let partials = par::map_range(batch, |i| {
        let (src, power, gy) = item(i);
        let mut gw = vec![T::zero(); cout * g.patch_len()];
        grad_w_item(src, power, gy, cout, g, &mut gw);
        (gw, grad_b_item(gy, cout, hw))
    });
    let mut gw = vec![T::zero(); cout * g.patch_len()];
    let mut gb = vec![T::zero(); cout];
    for (pw, pb) in partials {
        for (a, b) in gw.iter_mut().zip(pw) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(pb) {
            *a += b;
        }
    }
    (gw, gb)
}

/// Gradient of `Σ gy ⊙ conv2d_forward(x, k)` with respect to `x`; the
/// adjoint of the bias-free forward map.
pub fn conv2d_grad_x<T: Real>(k: &ConvKernel<T>, gy: &Tensor4<T>, pad: usize) -> Result<Tensor4<T>> {
    check_pad(k.k, pad)?;
    if gy.channels() != k.cout {
        return Err(Error::invalid(format!(
            "upstream gradient has {} channels, kernel produces {}",
            gy.channels(),
            k.cout
        )));
    }
    let g = Geometry {
        cin: k.cin,
        h: gy.height(),
        w: gy.width(),
        k: k.k,
        pad,
    };
    let mut gx = Tensor4::zeros(gy.batch(), k.cin, gy.height(), gy.width());
    let len = gx.item_len();
    par::for_each_chunk_mut(gx.as_mut_slice(), len, |i, dst| {
        grad_x_item(k, gy.item(i), g, dst);
    });
    Ok(gx)
}
