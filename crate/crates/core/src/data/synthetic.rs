//! Procedural piecewise-smooth test images: a shaded background with
//! overlapping disks, rectangles and striped regions, lightly smoothed.
//! Used where no natural image corpus is available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::Image;

enum Shape {
    Disk { cy: f64, cx: f64, r: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Stripes { y0: f64, x0: f64, y1: f64, x1: f64, freq: f64, angle: f64 },
}

pub fn synthetic_image(height: usize, width: usize, channels: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height as f64, width as f64);
    let shape_count = rng.random_range(8..16);
    let mut shapes = Vec::with_capacity(shape_count);
    for _ in 0..shape_count {
        let cy = rng.random_range(0.0..h);
        let cx = rng.random_range(0.0..w);
        let extent = rng.random_range(0.05..0.3) * h.min(w);
        let shape = match rng.random_range(0..3) {
            0 => Shape::Disk { cy, cx, r: extent },
            1 => Shape::Rect {
                y0: cy - extent,
                x0: cx - extent * rng.random_range(0.5..2.0),
                y1: cy + extent,
                x1: cx + extent * rng.random_range(0.5..2.0),
            },
            _ => Shape::Stripes {
                y0: cy - extent,
                x0: cx - extent,
                y1: cy + extent,
                x1: cx + extent,
                freq: rng.random_range(0.15..0.6),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            },
        };
        let levels: Vec<f64> = (0..channels).map(|_| rng.random_range(0.1..0.9)).collect();
        shapes.push((shape, levels));
    }
    let backgrounds: Vec<[f64; 3]> = (0..channels)
        .map(|_| {
            [
                rng.random_range(0.3..0.7),
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
            ]
        })
        .collect();

    let mut planes = vec![0.0f64; channels * height * width];
    for c in 0..channels {
        let plane = &mut planes[c * height * width..(c + 1) * height * width];
        let [b0, by, bx] = backgrounds[c];
        for y in 0..height {
            for x in 0..width {
                let (fy, fx) = (y as f64, x as f64);
                let mut v = b0 + by * fy / h + bx * fx / w;
                for (shape, levels) in &shapes {
                    let level = levels[c];
                    match *shape {
                        Shape::Disk { cy, cx, r } => {
                            if (fy - cy).powi(2) + (fx - cx).powi(2) <= r * r {
                                v = level;
                            }
                        }
                        Shape::Rect { y0, x0, y1, x1 } => {
                            if fy >= y0 && fy <= y1 && fx >= x0 && fx <= x1 {
                                v = level;
                            }
                        }
                        Shape::Stripes { y0, x0, y1, x1, freq, angle } => {
                            if fy >= y0 && fy <= y1 && fx >= x0 && fx <= x1 {
                                let phase = freq * (fx * angle.cos() + fy * angle.sin());
                                v = level + 0.15 * phase.sin();
                            }
                        }
                    }
                }
                plane[y * width + x] = v;
            }
        }
    }

    // 3x3 box smoothing with edge replication
    let mut pixels = vec![0.0f32; planes.len()];
    for c in 0..channels {
        let src = &planes[c * height * width..(c + 1) * height * width];
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let yy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                        let xx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
                        acc += src[yy * width + xx];
                    }
                }
                pixels[c * height * width + y * width + x] = (acc / 9.0).clamp(0.0, 1.0) as f32;
            }
        }
    }
    Image::new(height, width, channels, pixels).expect("valid synthetic image")
}
