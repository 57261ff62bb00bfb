//! Generative-neuron layers and the compact three-layer denoiser.

mod activation;
mod gen_conv;
mod model_io;
mod name;
mod network;

pub use activation::{tanh_activation, tanh_backward, tanh_forward, Activation, TanhBackward};
pub use gen_conv::{gen_conv_backward, gen_conv_forward, GenConvCache, GenConvGrads, GenerativeConvParams};
pub use model_io::{deserialize_model, load_model, save_model, serialize_model};
pub use name::ModelName;
pub use network::{
    build_network, network_backward, network_forward, LayerSpec, Network, NetworkCache,
    NetworkSpec, ParamGrads,
};

/// Kernel size used by every layer.
pub const KERNEL_SIZE: usize = 3;
