use crate::tensor::{clip_scalar, Real, Tensor4};
use crate::{Error, Result};

/// Image with samples in `[0, 1]`, stored channel-planar
/// (`[channel][row][col]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "{} samples do not fill a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
    }

    /// Square crop with top-left corner `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, size: usize) -> Result<Image> {
        if row + size > self.height || col + size > self.width {
            return Err(Error::invalid(format!(
                "{size}x{size} crop at ({row}, {col}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(size * size * self.channels);
        for c in 0..self.channels {
            let plane = &self.pixels[c * self.height * self.width..];
            for r in row..row + size {
                pixels.extend_from_slice(&plane[r * self.width + col..r * self.width + col + size]);
            }
        }
        Ok(Image {
            height: size,
            width: size,
            channels: self.channels,
            pixels,
        })
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor4<T> {
        Self::batch_tensor(std::slice::from_ref(self)).expect("single image")
    }

    /// Stacks same-sized images into an `[n][c][h][w]` tensor.
    pub fn batch_tensor<T: Real, I: std::borrow::Borrow<Image>>(images: &[I]) -> Result<Tensor4<T>> {
        let Some(first) = images.first().map(|i| i.borrow()) else {
            return Err(Error::invalid("cannot batch zero images"));
        };
        let mut data = Vec::with_capacity(images.len() * first.pixels.len());
        for img in images {
            let img = img.borrow();
            if !img.same_dims(first) {
                return Err(Error::invalid("images in a batch must share dimensions"));
            }
            data.extend(img.pixels.iter().map(|&v| T::from_f64(v as f64)));
        }
        Tensor4::from_vec(images.len(), first.channels, first.height, first.width, data)
    }

    /// Item `i` of `t`, clipped into `[0, 1]`.
    pub fn from_tensor_clipped<T: Real>(t: &Tensor4<T>, i: usize) -> Result<Image> {
        let pixels = t
            .item(i)
            .iter()
            .map(|&v| clip_scalar(v).as_f64() as f32)
            .collect();
        Image::new(t.height(), t.width(), t.channels(), pixels)
    }

    pub(crate) fn from_raw_unchecked(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Image {
        debug_assert!(pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        Image {
            height,
            width,
            channels,
            pixels,
        }
    }
}
