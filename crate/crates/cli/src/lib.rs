//! `selfonn` command-line front end: `train`, `denoise`, `eval`, `report`.
//!
//! Settings resolve as defaults ← config file (`--config`) ← flags; the
//! thread count additionally falls back to `SELFONN_THREADS` before its
//! default. Every command echoes its resolved settings to `<out>/run.cfg`.
//!
//! Exit codes: 0 success, 2 usage/config/data error, 3 numeric failure.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Command, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "selfonn", version, about = "Compact CNN / Self-ONN image denoisers")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Train a network on AWGN-corrupted patches of the images in --data.
    Train(Flags),
    /// Denoise the images in --test with the model file given by --model.
    Denoise(Flags),
    /// Evaluate model files on test directories and update results.csv.
    Eval(Flags),
    /// Render table1.txt, table2.txt and fig2.csv from results.csv.
    Report(Flags),
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Network name (train) or model file(s), comma separated (denoise/eval).
    #[arg(long)]
    pub model: Option<String>,
    /// Training image directory.
    #[arg(long)]
    pub data: Option<String>,
    /// Test image directories (eval) or input image file/directory (denoise).
    #[arg(long)]
    pub test: Option<String>,
    /// Noise levels on the 0-255 scale, comma separated.
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub patches: Option<String>,
    #[arg(long = "patch-size")]
    pub patch_size: Option<String>,
    #[arg(long)]
    pub channels: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: SELFONN_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<String>,
}

impl Flags {
    pub(crate) fn pairs(&self) -> Vec<(&'static str, &str)> {
        let mut out = Vec::new();
        let fields: [(&'static str, &Option<String>); 12] = [
            ("model", &self.model),
            ("data", &self.data),
            ("test", &self.test),
            ("sigma", &self.sigma),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("patches", &self.patches),
            ("patch_size", &self.patch_size),
            ("channels", &self.channels),
            ("out", &self.out),
            ("threads", &self.threads),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                out.push((k, v.as_str()));
            }
        }
        out
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub(crate) fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<selfonn_core::Error> for CliError {
    fn from(e: selfonn_core::Error) -> Self {
        use selfonn_core::Error;
        let code = match e {
            Error::Numeric(_) | Error::Diverged { .. } => 3,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (command, flags) = match cli.command {
        CliCommand::Train(f) => (Command::Train, f),
        CliCommand::Denoise(f) => (Command::Denoise, f),
        CliCommand::Eval(f) => (Command::Eval, f),
        CliCommand::Report(f) => (Command::Report, f),
    };
    let env_threads = std::env::var("SELFONN_THREADS").ok();
    let result = RunConfig::resolve(command, &flags, env_threads.as_deref())
        .and_then(|cfg| commands::execute(&cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("selfonn {}: {}", command.as_str(), e.message);
            e.code
        }
    }
}
