//! Images, AWGN corruption, patch sampling and train/validation splits.

mod image;
mod netpbm;
mod noise;
mod patches;
pub mod synthetic;

pub use image::Image;
pub use netpbm::{decode_netpbm, encode_netpbm, load_image, load_image_dir, save_image, NetpbmKind};
pub use noise::{add_awgn, awgn_samples, stream_key, NoiseConfig, NoiseDomain};
pub use patches::{extract_patches, split_train_val, PatchOrigin, PatchSet};
