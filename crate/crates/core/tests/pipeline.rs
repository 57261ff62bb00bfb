mod common;

use selfonn_core::conv::ConvKernel;
use selfonn_core::data::synthetic::synthetic_image;
use selfonn_core::data::{
    add_awgn, extract_patches, stream_key, Image, NoiseConfig, NoiseDomain,
};
use selfonn_core::eval::{denoise_image, evaluate_dataset, psnr};
use selfonn_core::layers::{
    build_network, Activation, GenerativeConvParams, LayerSpec, Network, NetworkSpec,
};
use selfonn_core::par::with_threads;
use selfonn_core::train::{fit, history_csv, TrainConfig};

fn images(count: usize, size: usize, seed: u64) -> Vec<Image> {
    (0..count).map(|i| synthetic_image(size, size, 1, seed * 1000 + i as u64)).collect()
}

fn identity_net(channels: usize) -> Network<f32> {
    let spec = NetworkSpec {
        name: "identity".into(),
        layers: vec![LayerSpec {
            in_channels: channels,
            out_channels: channels,
            kernel_size: 3,
            q_order: 1,
            activation: Activation::Linear,
        }],
        channels,
    };
    let layer = GenerativeConvParams::new(vec![ConvKernel::identity(channels, 3).unwrap()]).unwrap();
    Network::new(spec, vec![layer]).unwrap()
}

#[test]
fn identity_network_returns_clipped_input() {
    let img = synthetic_image(17, 23, 1, 4);
    let noisy = add_awgn(&img, &NoiseConfig::new(50.0, 1), stream_key(NoiseDomain::Denoise, 0, 0));
    let out = denoise_image(&identity_net(1), &noisy).unwrap();
    assert_eq!(out, noisy);
    let rgb = synthetic_image(9, 9, 3, 5);
    assert_eq!(denoise_image(&identity_net(3), &rgb).unwrap(), rgb);
    assert!(denoise_image(&identity_net(3), &img).is_err());
}

#[test]
fn denoised_output_stays_in_unit_range() {
    let net: Network<f32> = build_network("Self-ONN-5-4", 1, 9).unwrap();
    let img = synthetic_image(20, 20, 1, 6);
    let out = denoise_image(&net, &img).unwrap();
    assert_eq!((out.height(), out.width()), (20, 20));
    assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn psnr_is_symmetric_and_permutation_invariant() {
    let a = synthetic_image(12, 12, 1, 7);
    let b = add_awgn(&a, &NoiseConfig::new(20.0, 2), 5);
    assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    let reverse = |img: &Image| {
        let mut px = img.pixels().to_vec();
        px.reverse();
        Image::new(12, 12, 1, px).unwrap()
    };
    assert_eq!(psnr(&reverse(&a), &reverse(&b)).unwrap(), psnr(&a, &b).unwrap());
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
}

#[test]
fn more_noise_lowers_psnr() {
    let clean = synthetic_image(48, 48, 1, 8);
    let wins = (0..20u64)
        .filter(|&seed| {
            let key = stream_key(NoiseDomain::Test, 0, seed);
            let heavy = add_awgn(&clean, &NoiseConfig::new(30.0, seed), key);
            let light = add_awgn(&clean, &NoiseConfig::new(15.0, seed), key);
            psnr(&clean, &heavy).unwrap() < psnr(&clean, &light).unwrap()
        })
        .count();
    assert!(wins >= 19, "{wins} of 20");
}

#[test]
fn evaluation_is_independent_of_thread_count() {
    let net: Network<f32> = build_network("Self-ONN-3-4", 1, 3).unwrap();
    let test = images(5, 24, 3);
    let cfg = NoiseConfig::new(30.0, 11);
    let one = with_threads(Some(1), || evaluate_dataset(&net, &test, &cfg).unwrap());
    let many = with_threads(Some(4), || evaluate_dataset(&net, &test, &cfg).unwrap());
    assert_eq!(one.to_bits(), many.to_bits());
    assert!(one.is_finite());
}

#[test]
fn short_training_run_beats_identity_and_is_reproducible() {
    let train_images = images(6, 48, 1);
    let patches = extract_patches(&train_images, 16, 256, 5).unwrap();
    let mut cfg = TrainConfig::new(NoiseConfig::new(30.0, 5));
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.adam.learning_rate = 3e-3;
    let net: Network<f32> = build_network("CNN-8", 1, 5).unwrap();
    let a = with_threads(Some(1), || fit(&net, &patches, &cfg).unwrap());
    let b = with_threads(Some(3), || fit(&net, &patches, &cfg).unwrap());
    assert_eq!(history_csv(&a.history), history_csv(&b.history));
    assert_eq!(a.best.param_slices(), b.best.param_slices());
    assert_eq!(a.history.len(), 4);
    assert!(a.best_val_psnr > a.val_identity_psnr, "{} vs {}", a.best_val_psnr, a.val_identity_psnr);
    let best = a.history.iter().map(|r| r.val_psnr).fold(f64::MIN, f64::max);
    assert_eq!(a.best_val_psnr, best);
    assert_eq!(a.history[a.best_epoch - 1].val_psnr, best);
}
