use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::Image;
use crate::par;
use crate::{Error, Result};

const PATCH_STREAM: u64 = 0x7061_7463_6865_7321;
const SPLIT_STREAM: u64 = 0x7370_6c69_7421_2121;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchOrigin {
    /// Index of the source image.
    pub image: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub patch_size: usize,
    pub patches: Vec<Image>,
    pub origins: Vec<PatchOrigin>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    fn select(&self, idx: &[usize]) -> PatchSet {
        PatchSet {
            patch_size: self.patch_size,
            patches: idx.iter().map(|&i| self.patches[i].clone()).collect(),
            origins: idx.iter().map(|&i| self.origins[i]).collect(),
        }
    }
}

/// Samples `count` square patches: uniform image index, then a uniform
/// top-left corner among the valid positions. Duplicates are allowed.
pub fn extract_patches(
    images: &[Image],
    patch_size: usize,
    count: usize,
    seed: u64,
) -> Result<PatchSet> {
    if images.is_empty() {
        return Err(Error::invalid("no images to sample patches from"));
    }
    if count == 0 || patch_size == 0 {
        return Err(Error::invalid("patch count and size must be positive"));
    }
    if let Some((i, img)) = images
        .iter()
        .enumerate()
        .find(|(_, img)| img.height() < patch_size || img.width() < patch_size)
    {
        return Err(Error::invalid(format!(
            "image {i} ({}x{}) is smaller than the {patch_size}x{patch_size} patch size",
            img.height(),
            img.width()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PATCH_STREAM);
    let origins: Vec<PatchOrigin> = (0..count)
        .map(|_| {
            let image = rng.random_range(0..images.len());
            let img = &images[image];
            let row = rng.random_range(0..=img.height() - patch_size);
            let col = rng.random_range(0..=img.width() - patch_size);
            PatchOrigin { image, row, col }
        })
        .collect();
    let patches = par::map_range(count, |i| {
        let o = origins[i];
        images[o.image]
            .crop(o.row, o.col, patch_size)
            .expect("origin within bounds")
    });
    Ok(PatchSet {
        patch_size,
        patches,
        origins,
    })
}

/// Seeded shuffle, then the first `⌈ratio·n⌉` patches become the training
/// split and the rest the validation split.
pub fn split_train_val(p: &PatchSet, ratio: f64, seed: u64) -> Result<(PatchSet, PatchSet)> {
    if p.is_empty() {
        return Err(Error::invalid("cannot split an empty patch set"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let n = p.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    idx.shuffle(&mut rng);
    let n_train = ((ratio * n as f64).ceil() as usize).min(n);
    Ok((p.select(&idx[..n_train]), p.select(&idx[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> Image {
        let pixels = (0..h * w).map(|i| (i % 251) as f32 / 250.0).collect();
        Image::new(h, w, 1, pixels).unwrap()
    }

    #[test]
    fn exact_fit_gives_copies() {
        let img = gradient_image(40, 40);
        let set = extract_patches(std::slice::from_ref(&img), 40, 5, 1).unwrap();
        assert_eq!(set.len(), 5);
        assert!(set.patches.iter().all(|p| *p == img));
    }

    #[test]
    fn one_extra_row_gives_two_positions() {
        let img = gradient_image(41, 40);
        let set = extract_patches(&[img], 40, 200, 2).unwrap();
        assert!(set.origins.iter().all(|o| o.row <= 1 && o.col == 0));
        assert!(set.origins.iter().any(|o| o.row == 0));
        assert!(set.origins.iter().any(|o| o.row == 1));
    }

    #[test]
    fn small_image_rejected() {
        let imgs = [gradient_image(50, 50), gradient_image(39, 60)];
        let err = extract_patches(&imgs, 40, 1, 0).unwrap_err();
        assert!(err.to_string().contains("image 1"), "{err}");
    }

    #[test]
    fn corner_marginals_are_uniform() {
        // 61 valid rows/cols; each should receive ~10_000/61 draws.
        let set = extract_patches(&[gradient_image(100, 100)], 40, 10_000, 3).unwrap();
        let p: f64 = 1.0 / 61.0;
        let expected = 10_000.0 * p;
        let sd = (10_000.0 * p * (1.0 - p)).sqrt();
        let mut rows = [0usize; 61];
        let mut cols = [0usize; 61];
        for o in &set.origins {
            rows[o.row] += 1;
            cols[o.col] += 1;
        }
        for &c in rows.iter().chain(&cols) {
            assert!((c as f64 - expected).abs() <= 4.0 * sd, "{c} vs {expected}");
        }
    }

    #[test]
    fn split_sizes() {
        let img = gradient_image(50, 50);
        let set = extract_patches(&[img.clone()], 10, 100, 4).unwrap();
        let (train, val) = split_train_val(&set, 0.95, 0).unwrap();
        assert_eq!((train.len(), val.len()), (95, 5));

        let one = extract_patches(&[img], 10, 1, 4).unwrap();
        let (train, val) = split_train_val(&one, 0.95, 0).unwrap();
        assert_eq!((train.len(), val.len()), (1, 0));
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let set = PatchSet {
            patch_size: 1,
            patches: (0..1000).map(|_| Image::filled(1, 1, 1, 0.0).unwrap()).collect(),
            origins: (0..1000).map(|i| PatchOrigin { image: i, row: 0, col: 0 }).collect(),
        };
        let ids = |p: &PatchSet| p.origins.iter().map(|o| o.image).collect::<Vec<_>>();
        let (a_train, a_val) = split_train_val(&set, 0.95, 7).unwrap();
        let (b_train, b_val) = split_train_val(&set, 0.95, 7).unwrap();
        let (c_train, _) = split_train_val(&set, 0.95, 8).unwrap();
        assert_eq!(ids(&a_train), ids(&b_train));
        assert_eq!(ids(&a_val), ids(&b_val));
        assert_ne!(ids(&a_train), ids(&c_train));
        let mut all = ids(&a_train);
        all.extend(ids(&a_val));
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_bad_input() {
        let empty = PatchSet { patch_size: 4, patches: vec![], origins: vec![] };
        assert!(split_train_val(&empty, 0.95, 0).is_err());
        let set = extract_patches(&[gradient_image(8, 8)], 4, 3, 0).unwrap();
        assert!(split_train_val(&set, 1.0, 0).is_err());
        assert!(split_train_val(&set, 0.0, 0).is_err());
    }
}
