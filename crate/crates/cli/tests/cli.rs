use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use selfonn_core::conv::ConvKernel;
use selfonn_core::data::synthetic::synthetic_image;
use selfonn_core::data::{add_awgn, load_image, save_image, stream_key, NoiseConfig, NoiseDomain};
use selfonn_core::eval::{psnr, PUBLISHED_TABLE1_CSV};
use selfonn_core::layers::{
    save_model, Activation, GenerativeConvParams, LayerSpec, Network, NetworkSpec,
};

fn selfonn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfonn"))
        .args(args)
        .env_remove("SELFONN_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_images(dir: &Path, count: usize, size: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        let img = synthetic_image(size, size, 1, seed * 100 + i as u64);
        save_image(&img, dir.join(format!("img{i}.pgm"))).unwrap();
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn identity_model(path: &Path) {
    let spec = NetworkSpec {
        name: "CNN-1".into(),
        layers: vec![LayerSpec {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 3,
            q_order: 1,
            activation: Activation::Linear,
        }],
        channels: 1,
    };
    let layer = GenerativeConvParams::new(vec![ConvKernel::identity(1, 3).unwrap()]).unwrap();
    save_model(&Network::new(spec, vec![layer]).unwrap(), path).unwrap();
}

fn quick_train(data: &Path, out: &Path, model: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--model", model, "--sigma", "30", "--data", s(data), "--patches", "200",
        "--patch-size", "16", "--epochs", "2", "--batch", "16", "--seed", "7", "--out", s(out),
    ];
    args.extend_from_slice(extra);
    selfonn(&args)
}

#[test]
fn train_writes_model_history_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train");
    write_images(&data, 4, 32, 1);
    let out = dir.path().join("out");
    let res = quick_train(&data, &out, "Self-ONN-3-4", &[]);
    assert!(res.status.success(), "{}", stderr(&res));

    let history = fs::read_to_string(out.join("Self-ONN-3-4-sigma30.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,train_loss,val_psnr\n"));
    let model = fs::read(out.join("Self-ONN-3-4-sigma30.sonn")).unwrap();
    assert_eq!(&model[..4], b"SONN");
    // first layer record: in, out, K, Q as little-endian u16 after the 10-byte header
    assert_eq!(u16::from_le_bytes([model[16], model[17]]), 3);
    let cfg = fs::read_to_string(out.join("run.cfg")).unwrap();
    assert!(cfg.starts_with("# selfonn train\n"));
    assert!(cfg.contains("model = Self-ONN-3-4\n"));
    assert!(cfg.contains("patch_size = 16\n"));
}

#[test]
fn run_cfg_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train");
    write_images(&data, 3, 24, 2);
    let first = dir.path().join("a");
    assert!(quick_train(&data, &first, "CNN-4", &["--threads", "1"]).status.success());
    let second = dir.path().join("b");
    let cfg = dir.path().join("copy.cfg");
    let text = fs::read_to_string(first.join("run.cfg")).unwrap();
    fs::write(&cfg, text.replace(s(&first), s(&second))).unwrap();
    let res = selfonn(&["train", "--config", s(&cfg), "--threads", "3"]);
    assert!(res.status.success(), "{}", stderr(&res));
    for f in ["CNN-4-sigma30.sonn", "CNN-4-sigma30.history.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_config_file_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("layers.cfg");
    fs::write(&cfg, "# comment\nseed = 5\nsigma = 45\nout = ignored\n").unwrap();
    let out = dir.path().join("out");
    // report reads results.csv from --out, fails on the empty file, but has
    // echoed its resolved configuration first.
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("results.csv"), "").unwrap();
    let res = selfonn(&["report", "--config", s(&cfg), "--out", s(&out), "--sigma", "15"]);
    assert_eq!(res.status.code(), Some(2));
    let echoed = fs::read_to_string(out.join("run.cfg")).unwrap();
    assert!(echoed.contains("seed = 5\n"), "{echoed}");
    assert!(echoed.contains("sigma = 15\n"));
    assert!(echoed.contains("epochs = 100\n"));
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn thread_count_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("results.csv"), PUBLISHED_TABLE1_CSV).unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_selfonn"))
        .args(["report", "--out", s(&out)])
        .env("SELFONN_THREADS", "3")
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(fs::read_to_string(out.join("run.cfg")).unwrap().contains("threads = 3\n"));
}

#[test]
fn train_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train");
    write_images(&data, 2, 24, 3);
    let out = dir.path().join("out");

    let res = quick_train(&data, &out, "Self-ONN-64", &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("Self-ONN-64"), "{}", stderr(&res));

    let res = quick_train(&dir.path().join("missing"), &out, "CNN-4", &[]);
    assert_eq!(res.status.code(), Some(2));

    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(quick_train(&empty, &out, "CNN-4", &[]).status.code(), Some(2));

    assert_eq!(selfonn(&["train", "--epochs", "zero"]).status.code(), Some(2));
    assert_eq!(selfonn(&["train", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn denoise_with_identity_model_returns_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test");
    write_images(&test, 2, 20, 4);
    let model = dir.path().join("identity.sonn");
    identity_model(&model);
    let out = dir.path().join("out");
    let res = selfonn(&["denoise", "--model", s(&model), "--test", s(&test), "--out", s(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    for i in 0..2 {
        assert_eq!(
            fs::read(out.join(format!("img{i}_denoised.pgm"))).unwrap(),
            fs::read(test.join(format!("img{i}.pgm"))).unwrap()
        );
    }
}

#[test]
fn denoise_errors() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test");
    write_images(&test, 1, 20, 5);
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.sonn");
    let res = selfonn(&["denoise", "--model", s(&missing), "--test", s(&test), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));

    let model = dir.path().join("identity.sonn");
    identity_model(&model);
    let rgb = dir.path().join("rgb.ppm");
    save_image(&synthetic_image(12, 12, 3, 1), &rgb).unwrap();
    let res = selfonn(&["denoise", "--model", s(&model), "--test", s(&rgb), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));

    let junk = dir.path().join("junk.pgm");
    fs::write(&junk, b"P7\n1 1\n255\n\0").unwrap();
    let res = selfonn(&["denoise", "--model", s(&model), "--test", s(&junk), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));

    let res = selfonn(&["denoise", "--model", s(&model), "--test", s(&test), "--sigma", "30,60", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn trained_model_improves_noisy_image() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train");
    write_images(&data, 6, 48, 6);
    let out = dir.path().join("out");
    let res = selfonn(&[
        "train", "--model", "CNN-8", "--sigma", "90", "--data", s(&data), "--patches", "800",
        "--patch-size", "24", "--epochs", "4", "--batch", "16", "--seed", "1", "--out", s(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));

    let clean_path = dir.path().join("clean.pgm");
    let clean = synthetic_image(48, 48, 1, 999);
    save_image(&clean, &clean_path).unwrap();
    let model = out.join("CNN-8-sigma90.sonn");
    let res = selfonn(&[
        "denoise", "--model", s(&model), "--test", s(&clean_path), "--sigma", "90", "--seed", "3",
        "--out", s(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let noisy = load_image(out.join("clean_noisy.pgm")).unwrap();
    let denoised = load_image(out.join("clean_denoised.pgm")).unwrap();
    let expected_noisy = add_awgn(&clean, &NoiseConfig::new(90.0, 3), stream_key(NoiseDomain::Denoise, 0, 0));
    assert!(psnr(&expected_noisy, &noisy).unwrap() > 45.0);
    let (before, after) = (psnr(&clean, &noisy).unwrap(), psnr(&clean, &denoised).unwrap());
    assert!(after > before, "{after} <= {before}");
}

fn results(out: &Path) -> String {
    fs::read_to_string(out.join("results.csv")).unwrap()
}

#[test]
fn eval_appends_one_row_per_cell_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("mini");
    write_images(&test, 3, 24, 7);
    let model = dir.path().join("CNN-1.sonn");
    identity_model(&model);
    let out = dir.path().join("out");
    let run = |sigma: &str| {
        selfonn(&["eval", "--model", s(&model), "--test", s(&test), "--sigma", sigma, "--seed", "2", "--out", s(&out)])
    };
    assert!(run("30").status.success());
    let first = results(&out);
    assert_eq!(first.lines().count(), 2);
    assert!(first.lines().nth(1).unwrap().starts_with("CNN-1,mini,30,"));

    assert!(run("30").status.success());
    assert_eq!(results(&out), first);

    assert!(run("30,60,90").status.success());
    assert_eq!(results(&out).lines().count(), 4);
    assert!(results(&out).starts_with(&first));
}

#[test]
fn eval_adds_bm3d_reference_for_known_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("kodak");
    write_images(&test, 2, 24, 8);
    let model = dir.path().join("net-sigma60.sonn");
    identity_model(&model);
    let out = dir.path().join("out");
    let res = selfonn(&["eval", "--model", s(&model), "--test", s(&test), "--sigma", "30,60", "--out", s(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = results(&out);
    // the model was trained at sigma 60 only
    assert!(!text.contains("CNN-1,KODAK,30"));
    assert!(text.contains("CNN-1,KODAK,60,"));
    assert!(text.contains("BM3D,KODAK,30,28.5800"));
    assert!(text.contains("BM3D,KODAK,60,25.0500"));
}

#[test]
fn report_reproduces_published_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("results.csv"), PUBLISHED_TABLE1_CSV).unwrap();
    let res = selfonn(&["report", "--out", s(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let table1 = fs::read_to_string(out.join("table1.txt")).unwrap();
    for line in PUBLISHED_TABLE1_CSV.lines().skip(1) {
        let value = line.rsplit(',').next().unwrap();
        assert!(table1.contains(value), "{value}");
    }
    let table2 = fs::read_to_string(out.join("table2.txt")).unwrap();
    assert!(table2.contains("1->3"));
    let fig2 = fs::read_to_string(out.join("fig2.csv")).unwrap();
    assert!(fig2.starts_with("sigma,method,mean_psnr_db\n"));
    assert_eq!(fig2.lines().count(), 1 + 27);
}

#[test]
fn report_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(selfonn(&["report", "--out", s(&out)]).status.code(), Some(2));
    fs::write(out.join("results.csv"), "").unwrap();
    assert_eq!(selfonn(&["report", "--out", s(&out)]).status.code(), Some(2));
    fs::write(out.join("results.csv"), "method,dataset,sigma,psnr_db\n").unwrap();
    assert_eq!(selfonn(&["report", "--out", s(&out)]).status.code(), Some(2));
    fs::write(
        out.join("results.csv"),
        "method,dataset,sigma,psnr_db\nCNN-8,A,30,27.0\nCNN-8,B,60,25.0\n",
    )
    .unwrap();
    let res = selfonn(&["report", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let msg = stderr(&res);
    assert!(msg.contains("CNN-8") && msg.contains("A"), "{msg}");
}

