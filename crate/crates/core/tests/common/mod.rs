#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfonn_core::conv::ConvKernel;
use selfonn_core::layers::GenerativeConvParams;
use selfonn_core::Tensor4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor4<f64> {
    Tensor4::from_fn(shape[0], shape[1], shape[2], shape[3], |_| rng.random_range(lo..hi))
}

pub fn random_kernel(cout: usize, cin: usize, k: usize, with_bias: bool, rng: &mut ChaCha8Rng) -> ConvKernel<f64> {
    let weights = (0..cout * cin * k * k).map(|_| rng.random_range(-0.5..0.5)).collect();
    let bias = (0..cout)
        .map(|_| if with_bias { rng.random_range(-0.5..0.5) } else { 0.0 })
        .collect();
    ConvKernel::from_parts(cout, cin, k, weights, bias).unwrap()
}

pub fn random_params(q: usize, cout: usize, cin: usize, rng: &mut ChaCha8Rng) -> GenerativeConvParams<f64> {
    let kernels = (0..q).map(|i| random_kernel(cout, cin, 3, i == 0, rng)).collect();
    GenerativeConvParams::new(kernels).unwrap()
}

fn tap(x: &Tensor4<f64>, n: usize, c: usize, row: isize, col: isize) -> f64 {
    if row < 0 || col < 0 || row >= x.height() as isize || col >= x.width() as isize {
        0.0
    } else {
        x.get(n, c, row as usize, col as usize)
    }
}

/// Textbook zero-padded cross-correlation, seven nested loops.
pub fn naive_conv(x: &Tensor4<f64>, k: &ConvKernel<f64>) -> Tensor4<f64> {
    let ks = k.kernel_size();
    let pad = (ks / 2) as isize;
    let mut y = Tensor4::zeros(x.batch(), k.out_channels(), x.height(), x.width());
    for n in 0..x.batch() {
        for co in 0..k.out_channels() {
            for m in 0..x.height() {
                for j in 0..x.width() {
                    let mut acc = k.bias[co];
                    for ci in 0..k.in_channels() {
                        for r in 0..ks {
                            for t in 0..ks {
                                let v = tap(x, n, ci, m as isize + r as isize - pad, j as isize + t as isize - pad);
                                acc += k.weights[k.weight_index(co, ci, r, t)] * v;
                            }
                        }
                    }
                    y.set(n, co, m, j, acc);
                }
            }
        }
    }
    y
}

/// `Σ gy ⊙ conv(x)` differentiated by hand with respect to weights and bias.
pub fn naive_grad_wb(x: &Tensor4<f64>, gy: &Tensor4<f64>, ks: usize) -> (Vec<f64>, Vec<f64>) {
    let (cin, cout) = (x.channels(), gy.channels());
    let pad = (ks / 2) as isize;
    let mut gw = vec![0.0; cout * cin * ks * ks];
    let mut gb = vec![0.0; cout];
    for n in 0..x.batch() {
        for co in 0..cout {
            for m in 0..x.height() {
                for j in 0..x.width() {
                    let g = gy.get(n, co, m, j);
                    gb[co] += g;
                    for ci in 0..cin {
                        for r in 0..ks {
                            for t in 0..ks {
                                let v = tap(x, n, ci, m as isize + r as isize - pad, j as isize + t as isize - pad);
                                gw[((co * cin + ci) * ks + r) * ks + t] += g * v;
                            }
                        }
                    }
                }
            }
        }
    }
    (gw, gb)
}

/// Scatter form of the input gradient.
pub fn naive_grad_x(k: &ConvKernel<f64>, gy: &Tensor4<f64>) -> Tensor4<f64> {
    let ks = k.kernel_size();
    let pad = (ks / 2) as isize;
    let (h, w) = (gy.height() as isize, gy.width() as isize);
    let mut gx = Tensor4::zeros(gy.batch(), k.in_channels(), gy.height(), gy.width());
    for n in 0..gy.batch() {
        for co in 0..k.out_channels() {
            for m in 0..h {
                for j in 0..w {
                    let g = gy.get(n, co, m as usize, j as usize);
                    for ci in 0..k.in_channels() {
                        for r in 0..ks {
                            for t in 0..ks {
                                let (sr, sc) = (m + r as isize - pad, j + t as isize - pad);
                                if sr >= 0 && sc >= 0 && sr < h && sc < w {
                                    let (sr, sc) = (sr as usize, sc as usize);
                                    let cur = gx.get(n, ci, sr, sc);
                                    gx.set(n, ci, sr, sc, cur + g * k.weights[k.weight_index(co, ci, r, t)]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` at `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}
