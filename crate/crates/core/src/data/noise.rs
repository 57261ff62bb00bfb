//! Seeded additive white Gaussian noise.
//!
//! Every noise field is drawn from a ChaCha8 stream selected by the run seed
//! and a 64-bit stream id derived from `(domain, epoch, item index)`, so a
//! given item always receives the same noise whatever order or thread it is
//! processed on. Normal deviates come from the Box–Muller transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Standard deviation on the 0–255 scale.
    pub sigma255: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(sigma255: f64, seed: u64) -> Self {
        NoiseConfig { sigma255, seed }
    }

    /// Standard deviation in the normalized `[0, 1]` domain.
    pub fn sigma(&self) -> f64 {
        self.sigma255 / 255.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseDomain {
    Train = 1,
    Validation = 2,
    Test = 3,
    Denoise = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for one item's noise field.
pub fn stream_key(domain: NoiseDomain, epoch: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(domain as u64) ^ epoch) ^ index)
}

struct Gaussian {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Gaussian {
    fn new(seed: u64, key: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(key);
        Gaussian { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// `count` pre-clip noise samples with standard deviation `sigma` from
/// stream `key` of `seed`.
pub fn awgn_samples(count: usize, sigma: f64, seed: u64, key: u64) -> Vec<f64> {
    let mut g = Gaussian::new(seed, key);
    (0..count).map(|_| sigma * g.next()).collect()
}

/// `clip01(img + n)` with `n ~ N(0, (sigma255/255)²)` drawn from stream
/// `key` (see [`stream_key`]).
pub fn add_awgn(img: &Image, cfg: &NoiseConfig, key: u64) -> Image {
    if cfg.sigma255 == 0.0 {
        return img.clone();
    }
    let sigma = cfg.sigma();
    let mut g = Gaussian::new(cfg.seed, key);
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| (p as f64 + sigma * g.next()).clamp(0.0, 1.0) as f32)
        .collect();
    Image::from_raw_unchecked(img.height(), img.width(), img.channels(), pixels)
}
