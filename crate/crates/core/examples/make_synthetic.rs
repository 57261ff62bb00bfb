//! Writes synthetic grayscale test images for trying out the pipeline.
//!
//! ```text
//! cargo run --release -p selfonn-core --example make_synthetic -- <dir> [count] [size] [seed]
//! ```

use selfonn_core::data::save_image;
use selfonn_core::data::synthetic::synthetic_image;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first() else {
        eprintln!("usage: make_synthetic <dir> [count] [size] [seed]");
        std::process::exit(2);
    };
    let arg = |i: usize, default: u64| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let (count, size, seed) = (arg(1, 12), arg(2, 96) as usize, arg(3, 0));
    std::fs::create_dir_all(dir).expect("create output directory");
    for i in 0..count {
        let img = synthetic_image(size, size, 1, seed.wrapping_mul(1_000_003).wrapping_add(i));
        let path = std::path::Path::new(dir).join(format!("synth{i:03}.pgm"));
        save_image(&img, &path).expect("write image");
    }
}
