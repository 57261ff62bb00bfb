//! PGM/PPM codec (P2, P3, P5, P6) restricted to maxval 255.

use std::path::{Path, PathBuf};

use super::image::Image;
use crate::error::ImageDecodeError;
use crate::tensor::clip_scalar;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetpbmKind {
    /// P2
    AsciiGray,
    /// P3
    AsciiColor,
    /// P5
    BinaryGray,
    /// P6
    BinaryColor,
}

impl NetpbmKind {
    fn from_magic(m: &[u8]) -> Option<Self> {
        match m {
            b"P2" => Some(NetpbmKind::AsciiGray),
            b"P3" => Some(NetpbmKind::AsciiColor),
            b"P5" => Some(NetpbmKind::BinaryGray),
            b"P6" => Some(NetpbmKind::BinaryColor),
            _ => None,
        }
    }

    fn magic(self) -> &'static str {
        match self {
            NetpbmKind::AsciiGray => "P2",
            NetpbmKind::AsciiColor => "P3",
            NetpbmKind::BinaryGray => "P5",
            NetpbmKind::BinaryColor => "P6",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            NetpbmKind::AsciiGray | NetpbmKind::BinaryGray => 1,
            NetpbmKind::AsciiColor | NetpbmKind::BinaryColor => 3,
        }
    }

    pub fn is_ascii(self) -> bool {
        matches!(self, NetpbmKind::AsciiGray | NetpbmKind::AsciiColor)
    }

    pub fn extension(self) -> &'static str {
        if self.channels() == 1 {
            "pgm"
        } else {
            "ppm"
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.buf[start..self.pos]).ok()?.parse().ok()
    }
}

/// Decodes a PGM/PPM byte stream into a `[0, 1]` image (`u8 / 255`).
pub fn decode_netpbm(bytes: &[u8]) -> Result<(Image, NetpbmKind), ImageDecodeError> {
    let magic = bytes.get(..2).unwrap_or(bytes);
    let kind = NetpbmKind::from_magic(magic)
        .ok_or_else(|| ImageDecodeError::UnknownMagic(String::from_utf8_lossy(magic).into_owned()))?;
    let mut cur = Cursor { buf: bytes, pos: 2 };
    let mut header = |what: &str| {
        cur.number()
            .ok_or_else(|| ImageDecodeError::Header(format!("missing or invalid {what}")))
    };
    let width = header("width")? as usize;
    let height = header("height")? as usize;
    let maxval = header("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageDecodeError::Header("zero image dimension".into()));
    }
    if maxval != 255 {
        return Err(ImageDecodeError::UnsupportedDepth(maxval));
    }
    let channels = kind.channels();
    let expected = width * height * channels;
    let mut samples = Vec::with_capacity(expected);
    if kind.is_ascii() {
        while samples.len() < expected {
            cur.skip_space_and_comments();
            if cur.pos >= bytes.len() {
                break;
            }
            let v = cur.number().ok_or_else(|| {
                ImageDecodeError::Header(format!("non-numeric sample at byte {}", cur.pos))
            })?;
            if v > 255 {
                return Err(ImageDecodeError::SampleRange(v));
            }
            samples.push(v as u8);
        }
    } else {
        // exactly one whitespace byte separates maxval from the raster
        match bytes.get(cur.pos) {
            Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(ImageDecodeError::Truncated {
                    expected,
                    found: 0,
                })
            }
        }
        let raster = &bytes[cur.pos..];
        samples.extend_from_slice(&raster[..raster.len().min(expected)]);
    }
    if samples.len() < expected {
        return Err(ImageDecodeError::Truncated {
            expected,
            found: samples.len(),
        });
    }
    // interleaved -> planar
    let plane = width * height;
    let mut pixels = vec![0.0f32; expected];
    for (i, &s) in samples.iter().enumerate() {
        pixels[(i % channels) * plane + i / channels] = s as f32 / 255.0;
    }
    Ok((Image::from_raw_unchecked(height, width, channels, pixels), kind))
}

#[inline]
fn quantize(v: f32) -> u8 {
    // round half up after clamping
    (clip_scalar(v) * 255.0 + 0.5).floor() as u8
}

/// Encodes an image; grayscale as P2/P5 and color as P3/P6.
pub fn encode_netpbm(img: &Image, ascii: bool) -> Vec<u8> {
    let kind = match (img.channels(), ascii) {
        (1, false) => NetpbmKind::BinaryGray,
        (1, true) => NetpbmKind::AsciiGray,
        (_, false) => NetpbmKind::BinaryColor,
        (_, true) => NetpbmKind::AsciiColor,
    };
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = format!("{}\n{} {}\n255\n", kind.magic(), w, h).into_bytes();
    let plane = h * w;
    let sample = |i: usize| quantize(img.pixels()[(i % c) * plane + i / c]);
    if ascii {
        for row in 0..h {
            let line: Vec<String> = (row * w * c..(row + 1) * w * c)
                .map(|i| sample(i).to_string())
                .collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else {
        out.extend((0..plane * c).map(sample));
    }
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    load_with_kind(path.as_ref()).map(|(img, _)| img)
}

pub(crate) fn load_with_kind(path: &Path) -> Result<(Image, NetpbmKind)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_netpbm(&bytes).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a binary PGM (1 channel) or PPM (3 channels).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_netpbm(img, false)).map_err(|e| Error::io(path, e))
}

fn is_netpbm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
}

/// Loads every `.pgm`/`.ppm` file in `dir`, sorted by file name.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, Image)>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_netpbm(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| load_image(&p).map(|img| (p, img)))
        .collect()
}
