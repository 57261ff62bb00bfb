//! Compact two-hidden-layer image denoisers built from convolutional (Q = 1)
//! and generative (Q > 1) neurons.
//!
//! A generative neuron replaces each kernel tap `w · y` with a learnable
//! polynomial `Σ_q w_q · y^q`. With summation pooling this is exactly `Q`
//! ordinary convolutions applied to the element-wise powers of the input,
//! which is how [`layers::gen_conv_forward`] evaluates it.
//!
//! Module map:
//!
//! * [`tensor`]: dense `[n][c][h][w]` tensors and element-wise primitives.
//! * [`conv`]: same-padded stride-1 2D cross-correlation and its gradients.
//! * [`layers`]: generative convolution, tanh, the 3-layer network, model files.
//! * [`data`]: PGM/PPM I/O, AWGN corruption, patch sampling, train/val split.
//! * [`train`]: MSE loss, Adam, and the epoch loop with best-epoch selection.
//! * [`eval`]: PSNR, whole-image denoising, result grids and reports.
//!
//! Parallelism is provided by rayon behind the default `parallel` feature.
//! Work is only ever split across independent items (batch entries, images)
//! and reductions run in a fixed order, so results are bitwise identical for
//! any thread count and with the feature disabled.

pub mod conv;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod par;
mod simd;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor4};
