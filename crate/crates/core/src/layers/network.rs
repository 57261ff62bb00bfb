use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{tanh_backward, tanh_forward, Activation};
use super::gen_conv::{
    gen_conv_backward_impl, gen_conv_forward, gen_conv_infer, GenConvCache, GenConvGrads,
    GenerativeConvParams,
};
use super::name::ModelName;
use super::KERNEL_SIZE;
use crate::conv::ConvKernel;
use crate::tensor::{Real, Tensor4};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub q_order: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Image channel count (1 grayscale, 3 color).
    pub channels: usize,
}

impl NetworkSpec {
    /// Two tanh hidden layers of width `X` followed by a linear output
    /// layer, all of order `Q`.
    pub fn compact(name: ModelName, channels: usize) -> Self {
        let layer = |cin, cout, activation| LayerSpec {
            in_channels: cin,
            out_channels: cout,
            kernel_size: KERNEL_SIZE,
            q_order: name.q_order,
            activation,
        };
        NetworkSpec {
            name: name.to_string(),
            layers: vec![
                layer(channels, name.width, Activation::Tanh),
                layer(name.width, name.width, Activation::Tanh),
                layer(name.width, channels, Activation::Linear),
            ],
            channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        if self.channels == 0 {
            return Err(Error::invalid("network must have at least one image channel"));
        }
        let mut c = self.channels;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels != c || l.out_channels == 0 {
                return Err(Error::invalid(format!(
                    "layer {i} maps {} -> {} channels but receives {c}",
                    l.in_channels, l.out_channels
                )));
            }
            if l.kernel_size % 2 == 0 {
                return Err(Error::invalid(format!("layer {i}: kernel size must be odd")));
            }
            if l.q_order == 0 {
                return Err(Error::invalid(format!("layer {i}: q_order must be at least 1")));
            }
            c = l.out_channels;
        }
        if c != self.channels {
            return Err(Error::invalid(format!(
                "network outputs {c} channels for a {}-channel image",
                self.channels
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    spec: NetworkSpec,
    layers: Vec<GenerativeConvParams<T>>,
    generation: u64,
}

impl<T: Real> Network<T> {
    pub fn new(spec: NetworkSpec, layers: Vec<GenerativeConvParams<T>>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layers.len() {
            return Err(Error::invalid(format!(
                "spec lists {} layers, {} parameter sets given",
                spec.layers.len(),
                layers.len()
            )));
        }
        for (i, (s, p)) in spec.layers.iter().zip(&layers).enumerate() {
            if (s.in_channels, s.out_channels, s.kernel_size, s.q_order)
                != (p.in_channels(), p.out_channels(), p.kernel_size(), p.q_order())
            {
                return Err(Error::invalid(format!(
                    "layer {i} parameters do not match its spec {s:?}"
                )));
            }
        }
        Ok(Network {
            spec,
            layers,
            generation: 0,
        })
    }

    /// Network with all parameters zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                GenerativeConvParams::zeros(l.q_order, l.out_channels, l.in_channels, l.kernel_size)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec, layers)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn channels(&self) -> usize {
        self.spec.channels
    }

    pub fn layers(&self) -> &[GenerativeConvParams<T>] {
        &self.layers
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut GenerativeConvParams<T> {
        self.generation += 1;
        &mut self.layers[i]
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Trainable tensors: per layer, the weights of each order then the bias.
    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            for k in l.kernels() {
                out.push(k.weights.as_slice());
            }
            out.push(l.bias());
        }
        out
    }

    /// Mutable view in [`Self::param_slices`] order. Invalidates caches from
    /// earlier forward passes.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.generation += 1;
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(l.param_slices_mut());
        }
        out
    }

    /// Forward pass without retaining intermediate maps.
    pub fn predict(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut cur = None::<Tensor4<T>>;
        for (spec, p) in self.spec.layers.iter().zip(&self.layers) {
            let input = cur.as_ref().unwrap_or(x);
            let z = gen_conv_infer(input, p, p.same_padding())?;
            cur = Some(match spec.activation {
                Activation::Tanh => tanh_forward(&z),
                Activation::Linear => z,
            });
        }
        Ok(cur.expect("at least one layer"))
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            generation: 0,
        }
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.spec.channels {
            return Err(Error::invalid(format!(
                "network expects {} channels, input has {}",
                self.spec.channels,
                x.channels()
            )));
        }
        Ok(())
    }
}

/// Intermediate maps from [`network_forward`].
#[derive(Clone, Debug)]
pub struct NetworkCache<T = f32> {
    generation: u64,
    layers: Vec<GenConvCache<T>>,
    /// Post-activation outputs of tanh layers.
    activated: Vec<Option<Tensor4<T>>>,
}

/// Per-layer gradients, in [`Network::param_slices`] order when flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T = f32> {
    pub layers: Vec<GenConvGrads<T>>,
}

impl<T: Real> ParamGrads<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            for w in &l.weights {
                out.push(w.as_slice());
            }
            out.push(l.bias.as_slice());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

pub fn network_forward<T: Real>(
    net: &Network<T>,
    x: &Tensor4<T>,
) -> Result<(Tensor4<T>, NetworkCache<T>)> {
    net.check_input(x)?;
    let mut caches = Vec::with_capacity(net.layers.len());
    let mut activated = Vec::with_capacity(net.layers.len());
    let mut cur = None::<Tensor4<T>>;
    for (spec, p) in net.spec.layers.iter().zip(&net.layers) {
        let input = cur.as_ref().unwrap_or(x);
        let (z, cache) = gen_conv_forward(input, p, p.same_padding())?;
        caches.push(cache);
        let out = match spec.activation {
            Activation::Tanh => {
                let a = tanh_forward(&z);
                activated.push(Some(a.clone()));
                a
            }
            Activation::Linear => {
                activated.push(None);
                z
            }
        };
        cur = Some(out);
    }
    Ok((
        cur.expect("at least one layer"),
        NetworkCache {
            generation: net.generation,
            layers: caches,
            activated,
        },
    ))
}

pub fn network_backward<T: Real>(
    net: &Network<T>,
    cache: &NetworkCache<T>,
    gy: &Tensor4<T>,
) -> Result<ParamGrads<T>> {
    if cache.generation != net.generation || cache.layers.len() != net.layers.len() {
        return Err(Error::invalid(
            "stale cache: network parameters changed since the forward pass",
        ));
    }
    let n = net.layers.len();
    let mut grads = Vec::with_capacity(n);
    let mut upstream = gy.clone();
    for l in (0..n).rev() {
        if let Some(a) = &cache.activated[l] {
            upstream = tanh_backward(a, &upstream)?;
        }
        let p = &net.layers[l];
        let (g, gx) = gen_conv_backward_impl(&cache.layers[l], p, &upstream, p.same_padding(), l > 0)?;
        grads.push(g);
        if let Some(gx) = gx {
            upstream = gx;
        }
    }
    grads.reverse();
    Ok(ParamGrads { layers: grads })
}

/// Builds a compact network from its name with Glorot-uniform weights
/// (`U[-b, b]`, `b = sqrt(6 / (cin·K² + cout·K²))`, identical for every
/// order) and zero biases.
pub fn build_network<T: Real>(name: &str, channels: usize, seed: u64) -> Result<Network<T>> {
    let parsed: ModelName = name.parse()?;
    if channels == 0 {
        return Err(Error::invalid("channels must be at least 1"));
    }
    let spec = NetworkSpec::compact(parsed, channels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layers
        .iter()
        .map(|l| {
            let kk = l.kernel_size * l.kernel_size;
            let bound = (6.0 / ((l.in_channels * kk + l.out_channels * kk) as f64)).sqrt();
            let kernels = (0..l.q_order)
                .map(|_| {
                    let n = l.out_channels * l.in_channels * kk;
                    let weights = (0..n)
                        .map(|_| T::from_f64(rng.random_range(-bound..=bound)))
                        .collect();
                    ConvKernel::from_parts(
                        l.out_channels,
                        l.in_channels,
                        l.kernel_size,
                        weights,
                        vec![T::zero(); l.out_channels],
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            GenerativeConvParams::new(kernels)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(spec, layers)
}
