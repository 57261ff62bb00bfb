//! Generative convolution: `y = bias + Σ_{q=1..Q} conv(x^q, w_q)`.

use crate::conv::{self, forward_item, grad_x_item, ConvKernel, Term};
use crate::par;
use crate::tensor::{elementwise_power, Real, Tensor4};
use crate::{Error, Result};

/// Weight stack of a generative layer. `kernels[q - 1]` holds the order-`q`
/// weights; the layer bias lives on `kernels[0]` and the bias slots of all
/// higher-order kernels stay zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeConvParams<T = f32> {
    kernels: Vec<ConvKernel<T>>,
}

impl<T: Real> GenerativeConvParams<T> {
    pub fn new(kernels: Vec<ConvKernel<T>>) -> Result<Self> {
        let Some(first) = kernels.first() else {
            return Err(Error::invalid("a generative layer needs at least one kernel"));
        };
        let dims = (first.out_channels(), first.in_channels(), first.kernel_size());
        for (i, k) in kernels.iter().enumerate() {
            if (k.out_channels(), k.in_channels(), k.kernel_size()) != dims {
                return Err(Error::invalid(format!(
                    "kernel for q={} has shape {:?}, expected {dims:?}",
                    i + 1,
                    (k.out_channels(), k.in_channels(), k.kernel_size())
                )));
            }
            if i > 0 && k.bias.iter().any(|&b| b != T::zero()) {
                return Err(Error::invalid(format!(
                    "kernel for q={} carries a non-zero bias",
                    i + 1
                )));
            }
        }
        Ok(GenerativeConvParams { kernels })
    }

    pub fn zeros(q_order: usize, cout: usize, cin: usize, k: usize) -> Result<Self> {
        if q_order == 0 {
            return Err(Error::invalid("q_order must be at least 1"));
        }
        let kernels = (0..q_order)
            .map(|_| ConvKernel::zeros(cout, cin, k))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kernels)
    }

    #[inline]
    pub fn q_order(&self) -> usize {
        self.kernels.len()
    }

    #[inline]
    pub fn kernels(&self) -> &[ConvKernel<T>] {
        &self.kernels
    }

    /// Kernel of order `q` (1-based).
    pub fn kernel(&self, q: usize) -> &ConvKernel<T> {
        &self.kernels[q - 1]
    }

    /// Mutable weights of order `q` (1-based). Biases are reached through
    /// [`Self::bias_mut`] only, which keeps higher-order bias slots at zero.
    pub fn weights_mut(&mut self, q: usize) -> &mut [T] {
        &mut self.kernels[q - 1].weights
    }

    /// Weights of every order followed by the bias.
    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let (first, rest) = self.kernels.split_first_mut().expect("non-empty");
        let mut out: Vec<&mut [T]> = vec![&mut first.weights];
        out.extend(rest.iter_mut().map(|k| k.weights.as_mut_slice()));
        out.push(&mut first.bias);
        out
    }

    pub fn bias(&self) -> &[T] {
        &self.kernels[0].bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.kernels[0].bias
    }

    pub fn in_channels(&self) -> usize {
        self.kernels[0].in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.kernels[0].out_channels()
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels[0].kernel_size()
    }

    pub fn same_padding(&self) -> usize {
        self.kernels[0].same_padding()
    }

    pub fn cast<U: Real>(&self) -> GenerativeConvParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect::<Vec<U>>();
        GenerativeConvParams {
            kernels: self
                .kernels
                .iter()
                .map(|k| {
                    ConvKernel::from_parts(
                        k.out_channels(),
                        k.in_channels(),
                        k.kernel_size(),
                        conv(&k.weights),
                        conv(&k.bias),
                    )
                    .expect("cast preserves shape")
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &Tensor4<T>, pad: usize) -> Result<()> {
        if x.channels() != self.in_channels() {
            return Err(Error::invalid(format!(
                "layer expects {} input channels, tensor has {}",
                self.in_channels(),
                x.channels()
            )));
        }
        if pad != self.same_padding() {
            return Err(Error::invalid(format!(
                "padding {pad} is not same-padding for kernel size {}",
                self.kernel_size()
            )));
        }
        Ok(())
    }
}

/// Power maps `x^1 .. x^Q` retained for the backward pass.
#[derive(Clone, Debug)]
pub struct GenConvCache<T = f32> {
    powers: Vec<Tensor4<T>>,
}

impl<T: Real> GenConvCache<T> {
    pub fn powers(&self) -> &[Tensor4<T>] {
        &self.powers
    }

    pub fn input(&self) -> &Tensor4<T> {
        &self.powers[0]
    }
}

/// Gradients of one generative layer; `weights[q - 1]` is laid out like the
/// order-`q` kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConvGrads<T = f32> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

pub fn gen_conv_forward<T: Real>(
    x: &Tensor4<T>,
    p: &GenerativeConvParams<T>,
    pad: usize,
) -> Result<(Tensor4<T>, GenConvCache<T>)> {
    p.check_input(x, pad)?;
    let mut powers = Vec::with_capacity(p.q_order());
    powers.push(x.clone());
    for q in 2..=p.q_order() {
        powers.push(elementwise_power(x, q)?);
    }
    let g = conv::geometry(x, p.kernel_size(), pad);
    let mut y = Tensor4::zeros(x.batch(), p.out_channels(), x.height(), x.width());
    let len = y.item_len();
    par::for_each_chunk_mut(y.as_mut_slice(), len, |i, dst| {
        let terms: Vec<Term<'_, T>> = powers
            .iter()
            .zip(p.kernels())
            .map(|(pw, k)| Term {
                src: pw.item(i),
                power: 1,
                kernel: k,
            })
            .collect();
        forward_item(&terms, g, dst);
    });
    Ok((y, GenConvCache { powers }))
}

/// Forward pass without a cache; powers are formed on the fly inside the
/// im2col lowering. Bitwise identical to [`gen_conv_forward`].
pub(crate) fn gen_conv_infer<T: Real>(
    x: &Tensor4<T>,
    p: &GenerativeConvParams<T>,
    pad: usize,
) -> Result<Tensor4<T>> {
    p.check_input(x, pad)?;
    let g = conv::geometry(x, p.kernel_size(), pad);
    let mut y = Tensor4::zeros(x.batch(), p.out_channels(), x.height(), x.width());
    let len = y.item_len();
    par::for_each_chunk_mut(y.as_mut_slice(), len, |i, dst| {
        let terms: Vec<Term<'_, T>> = p
            .kernels()
            .iter()
            .enumerate()
            .map(|(q, k)| Term {
                src: x.item(i),
                power: q + 1,
                kernel: k,
            })
            .collect();
        forward_item(&terms, g, dst);
    });
    Ok(y)
}

pub fn gen_conv_backward<T: Real>(
    cache: &GenConvCache<T>,
    p: &GenerativeConvParams<T>,
    gy: &Tensor4<T>,
    pad: usize,
) -> Result<(GenConvGrads<T>, Tensor4<T>)> {
    let (grads, gx) = gen_conv_backward_impl(cache, p, gy, pad, true)?;
    Ok((grads, gx.expect("input gradient requested")))
}

pub(crate) fn gen_conv_backward_impl<T: Real>(
    cache: &GenConvCache<T>,
    p: &GenerativeConvParams<T>,
    gy: &Tensor4<T>,
    pad: usize,
    want_input_grad: bool,
) -> Result<(GenConvGrads<T>, Option<Tensor4<T>>)> {
    if cache.powers.len() != p.q_order() {
        return Err(Error::invalid(format!(
            "cache holds {} power maps but the layer has Q = {}",
            cache.powers.len(),
            p.q_order()
        )));
    }
    let x = cache.input();
    p.check_input(x, pad)?;
    if gy.shape() != [x.batch(), p.out_channels(), x.height(), x.width()] {
        return Err(Error::invalid(format!(
            "upstream gradient {:?} does not match layer output for input {:?}",
            gy.shape(),
            x.shape()
        )));
    }
    let g = conv::geometry(x, p.kernel_size(), pad);
    let cout = p.out_channels();

    let mut weights = Vec::with_capacity(p.q_order());
    let mut bias = Vec::new();
    for (q, pw) in cache.powers.iter().enumerate() {
        let (gw, gb) = conv::reduce_grad_wb(x.batch(), cout, g, |i| (pw.item(i), 1, gy.item(i)));
        if q == 0 {
            bias = gb;
        }
        weights.push(gw);
    }

    let gx = want_input_grad.then(|| {
        let mut gx = Tensor4::zeros(x.batch(), x.channels(), x.height(), x.width());
        let len = gx.item_len();
        par::for_each_chunk_mut(gx.as_mut_slice(), len, |i, dst| {
            grad_x_item(p.kernel(1), gy.item(i), g, dst);
            let mut term = vec![T::zero(); len];
            for q in 2..=p.q_order() {
                term.fill(T::zero());
                grad_x_item(p.kernel(q), gy.item(i), g, &mut term);
                // d(x^q)/dx = q · x^(q-1)
                let scale = T::from_f64(q as f64);
                let lower = cache.powers[q - 2].item(i);
                for ((d, &t), &xv) in dst.iter_mut().zip(&term).zip(lower) {
                    *d += t * scale * xv;
                }
            }
        });
        gx
    });
    Ok((GenConvGrads { weights, bias }, gx))
}
