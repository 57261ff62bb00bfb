//! Run configuration: defaults ← config file ← flags.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::{CliError, Flags};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Denoise,
    Eval,
    Report,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Denoise => "denoise",
            Command::Eval => "eval",
            Command::Report => "report",
        }
    }
}

/// Keys in `run.cfg` order.
pub const KEYS: [&str; 12] = [
    "model",
    "data",
    "test",
    "sigma",
    "seed",
    "epochs",
    "batch",
    "patches",
    "patch_size",
    "channels",
    "out",
    "threads",
];

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn defaults(command: Command) -> BTreeMap<&'static str, String> {
    let sigma = match command {
        // noise is only added when asked for
        Command::Denoise => "",
        _ => "30,60,90",
    };
    let model = match command {
        Command::Train => "CNN-64",
        _ => "",
    };
    [
        ("model", model.to_string()),
        ("data", "data/train".into()),
        ("test", "data/test".into()),
        ("sigma", sigma.into()),
        ("seed", "0".into()),
        ("epochs", "100".into()),
        ("batch", "64".into()),
        ("patches", "200000".into()),
        ("patch_size", "40".into()),
        ("channels", "1".into()),
        ("out", "out".into()),
        ("threads", default_threads().to_string()),
    ]
    .into_iter()
    .collect()
}

fn canonical_key(key: &str) -> Option<&'static str> {
    let k = key.trim().replace('-', "_");
    KEYS.iter().copied().find(|&known| known == k)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(&'static str, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "config line {}: expected `key = value`, got {raw:?}",
                i + 1
            )));
        };
        let key = canonical_key(k).ok_or_else(|| {
            CliError::usage(format!("config line {}: unknown key {:?}", i + 1, k.trim()))
        })?;
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Fully resolved settings of one command invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: String,
    pub data: PathBuf,
    pub test: Vec<PathBuf>,
    pub sigma: Vec<f64>,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub patches: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub out: PathBuf,
    pub threads: usize,
    raw: BTreeMap<&'static str, String>,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value {v:?} for {key}")))
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    pub fn resolve(
        command: Command,
        flags: &Flags,
        env_threads: Option<&str>,
    ) -> Result<Self, CliError> {
        let mut raw = defaults(command);
        if let Some(t) = env_threads.filter(|t| !t.trim().is_empty()) {
            raw.insert("threads", t.trim().to_string());
        }
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (k, v) in parse_config_text(&text)? {
                raw.insert(k, v);
            }
        }
        for (k, v) in flags.pairs() {
            raw.insert(k, v.to_string());
        }
        Self::from_raw(command, raw)
    }

    fn from_raw(command: Command, raw: BTreeMap<&'static str, String>) -> Result<Self, CliError> {
        let get = |k: &str| raw[k].as_str();
        let sigma = split_list(get("sigma"))
            .map(|s| parse_num::<f64>("sigma", s))
            .collect::<Result<Vec<_>, _>>()?;
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(CliError::usage("sigma values must be finite and non-negative"));
        }
        let cfg = RunConfig {
            command,
            model: get("model").trim().to_string(),
            data: PathBuf::from(get("data").trim()),
            test: split_list(get("test")).map(PathBuf::from).collect(),
            sigma,
            seed: parse_num("seed", get("seed"))?,
            epochs: parse_num("epochs", get("epochs"))?,
            batch: parse_num("batch", get("batch"))?,
            patches: parse_num("patches", get("patches"))?,
            patch_size: parse_num("patch_size", get("patch_size"))?,
            channels: parse_num("channels", get("channels"))?,
            out: PathBuf::from(get("out").trim()),
            threads: parse_num("threads", get("threads"))?,
            raw,
        };
        if cfg.epochs == 0 || cfg.batch == 0 || cfg.patches == 0 || cfg.patch_size == 0 {
            return Err(CliError::usage("epochs, batch, patches and patch-size must be positive"));
        }
        if cfg.channels != 1 && cfg.channels != 3 {
            return Err(CliError::usage("channels must be 1 or 3"));
        }
        if cfg.threads == 0 {
            return Err(CliError::usage("threads must be at least 1"));
        }
        Ok(cfg)
    }

    /// Model entries of a comma-separated `model` value.
    pub fn models(&self) -> Vec<String> {
        split_list(&self.model).map(str::to_string).collect()
    }

    /// `run.cfg` contents; loading it with `--config` reproduces this
    /// configuration.
    pub fn render(&self) -> String {
        let mut out = format!("# selfonn {}\n", self.command.as_str());
        for k in KEYS {
            out.push_str(&format!("{k} = {}\n", self.raw[k]));
        }
        out
    }
}
