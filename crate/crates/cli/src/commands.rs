use std::fs;
use std::path::{Path, PathBuf};

use selfonn_core::data::{
    add_awgn, extract_patches, load_image, load_image_dir, save_image, stream_key, Image,
    NoiseConfig, NoiseDomain,
};
use selfonn_core::eval::{
    aggregate_report, available_q_pairs, bm3d_reference, delta_q_table, delta_q_widths,
    denoise_image, evaluate_dataset, format_sigma, table2_text, Cell, EvalGrid, BM3D,
};
use selfonn_core::layers::{build_network, load_model, save_model, Network};
use selfonn_core::par;
use selfonn_core::train::{fit_with_progress, history_csv, TrainConfig};

use crate::config::{Command, RunConfig};
use crate::CliError;

pub(crate) fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    par::with_threads(Some(cfg.threads), || {
        fs::create_dir_all(&cfg.out).map_err(|e| io_error(&cfg.out, e))?;
        write(&cfg.out.join("run.cfg"), cfg.render().as_bytes())?;
        match cfg.command {
            Command::Train => train(cfg),
            Command::Denoise => denoise(cfg),
            Command::Eval => eval(cfg),
            Command::Report => report(cfg),
        }
    })
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn load_dir(dir: &Path, channels: usize) -> Result<Vec<(PathBuf, Image)>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", dir.display())));
    }
    let images = load_image_dir(dir)?;
    if images.is_empty() {
        return Err(CliError::usage(format!(
            "{} contains no .pgm/.ppm images",
            dir.display()
        )));
    }
    if let Some((path, img)) = images.iter().find(|(_, img)| img.channels() != channels) {
        return Err(CliError::usage(format!(
            "{} has {} channels, expected {channels}",
            path.display(),
            img.channels()
        )));
    }
    Ok(images)
}

fn train(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.sigma.is_empty() {
        return Err(CliError::usage("train needs at least one --sigma"));
    }
    let name = cfg.model.trim();
    if name.is_empty() || name.contains(',') {
        return Err(CliError::usage("train needs exactly one --model network name"));
    }
    let net: Network<f32> = build_network(name, cfg.channels, cfg.seed)?;
    let images: Vec<Image> = load_dir(&cfg.data, cfg.channels)?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let patches = extract_patches(&images, cfg.patch_size, cfg.patches, cfg.seed)?;

    for &sigma in &cfg.sigma {
        let mut tc = TrainConfig::new(NoiseConfig::new(sigma, cfg.seed));
        tc.epochs = cfg.epochs;
        tc.batch_size = cfg.batch;
        let tag = format!("{}-sigma{}", net.name(), format_sigma(sigma));
        let result = fit_with_progress(&net, &patches, &tc, |r| {
            eprintln!(
                "{tag} epoch {}/{}: loss {:.6}, val {:.3} dB",
                r.epoch, tc.epochs, r.train_loss, r.val_psnr
            );
        })?;
        eprintln!(
            "{tag}: best epoch {} at {:.3} dB (identity {:.3} dB)",
            result.best_epoch, result.best_val_psnr, result.val_identity_psnr
        );
        save_model(&result.best, cfg.out.join(format!("{tag}.sonn")))?;
        write(
            &cfg.out.join(format!("{tag}.history.csv")),
            history_csv(&result.history).as_bytes(),
        )?;
    }
    Ok(())
}

fn denoise(cfg: &RunConfig) -> Result<(), CliError> {
    let models = cfg.models();
    let [model_path] = models.as_slice() else {
        return Err(CliError::usage("denoise needs exactly one --model file"));
    };
    if cfg.sigma.len() > 1 {
        return Err(CliError::usage("denoise accepts at most one --sigma"));
    }
    let net = load_model(model_path)?;
    let [input] = cfg.test.as_slice() else {
        return Err(CliError::usage("denoise needs exactly one --test file or directory"));
    };
    let inputs: Vec<(PathBuf, Image)> = if input.is_dir() {
        load_dir(input, net.channels())?
    } else {
        vec![(input.clone(), load_image(input)?)]
    };
    for (i, (path, clean)) in inputs.iter().enumerate() {
        if clean.channels() != net.channels() {
            return Err(CliError::usage(format!(
                "{} has {} channels but the model expects {}",
                path.display(),
                clean.channels(),
                net.channels()
            )));
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("image{i}"));
        let ext = if clean.channels() == 1 { "pgm" } else { "ppm" };
        let noisy = match cfg.sigma.first() {
            Some(&sigma) => {
                let noise = NoiseConfig::new(sigma, cfg.seed);
                let noisy = add_awgn(clean, &noise, stream_key(NoiseDomain::Denoise, 0, i as u64));
                save_image(&noisy, cfg.out.join(format!("{stem}_noisy.{ext}")))?;
                noisy
            }
            None => clean.clone(),
        };
        let out = denoise_image(&net, &noisy)?;
        save_image(&out, cfg.out.join(format!("{stem}_denoised.{ext}")))?;
    }
    Ok(())
}

/// Training noise level encoded in a model file name (`...-sigma30.sonn`).
fn model_sigma(path: &Path) -> Option<f64> {
    let stem = path.file_stem()?.to_str()?;
    let (_, s) = stem.rsplit_once("-sigma")?;
    s.parse().ok()
}

fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let models = cfg.models();
    if models.is_empty() {
        return Err(CliError::usage("eval needs at least one --model file"));
    }
    if cfg.test.is_empty() {
        return Err(CliError::usage("eval needs at least one --test directory"));
    }
    if cfg.sigma.is_empty() {
        return Err(CliError::usage("eval needs at least one --sigma"));
    }
    let results_path = cfg.out.join("results.csv");
    let mut grid = match fs::read_to_string(&results_path) {
        Ok(text) if !text.trim().is_empty() => EvalGrid::from_results_csv(&text)?,
        _ => EvalGrid::new(),
    };

    let mut datasets = Vec::with_capacity(cfg.test.len());
    for dir in &cfg.test {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::usage(format!("cannot name dataset {}", dir.display())))?;
        let images: Vec<Image> = load_dir(dir, cfg.channels)?
            .into_iter()
            .map(|(_, img)| img)
            .collect();
        datasets.push((name, images));
    }

    for model in &models {
        let path = Path::new(model);
        let net = load_model(path)?;
        if net.channels() != cfg.channels {
            return Err(CliError::usage(format!(
                "{model} expects {} channels, --channels is {}",
                net.channels(),
                cfg.channels
            )));
        }
        let trained_at = model_sigma(path);
        for &sigma in &cfg.sigma {
            if trained_at.is_some_and(|t| t != sigma) {
                continue;
            }
            for (name, images) in &datasets {
                let dataset = bm3d_reference(name, sigma).map_or(name.clone(), |(c, _)| c);
                let psnr = evaluate_dataset(&net, images, &NoiseConfig::new(sigma, cfg.seed))?;
                eprintln!("{} {dataset} sigma {}: {psnr:.4} dB", net.name(), format_sigma(sigma));
                grid.insert(
                    net.name(),
                    &dataset,
                    sigma,
                    Cell {
                        psnr_db: psnr,
                        external: false,
                    },
                );
            }
        }
    }
    for (name, _) in &datasets {
        for &sigma in &cfg.sigma {
            if let Some((dataset, v)) = bm3d_reference(name, sigma) {
                grid.insert(
                    BM3D,
                    &dataset,
                    sigma,
                    Cell {
                        psnr_db: v,
                        external: true,
                    },
                );
            }
        }
    }
    write(&results_path, grid.to_results_csv().as_bytes())
}

fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let results_path = cfg.out.join("results.csv");
    let text = fs::read_to_string(&results_path).map_err(|e| io_error(&results_path, e))?;
    let grid = EvalGrid::from_results_csv(&text)?;
    let report = aggregate_report(&grid, BM3D)?;
    let tables = delta_q_widths(&grid)
        .into_iter()
        .map(|w| delta_q_table(&grid, w, &available_q_pairs(&grid, w)))
        .collect::<Result<Vec<_>, _>>()?;
    write(&cfg.out.join("table1.txt"), report.table1_text().as_bytes())?;
    write(&cfg.out.join("table2.txt"), table2_text(&tables).as_bytes())?;
    write(&cfg.out.join("fig2.csv"), report.fig2_csv().as_bytes())
}
