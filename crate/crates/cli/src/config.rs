//! Run configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use metaeval_core::{Format, GeneratorConfig, Scheme, Sidedness};
use serde::Deserialize;

/// Marks failures caused by the user's input rather than the computation.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file (JSONL or long-format CSV).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset format; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<Format>,
    /// Metric scores CSV accompanying a CSV dataset.
    #[arg(long = "metric-scores")]
    pub metric_scores: Option<PathBuf>,
    /// Metric ids to evaluate (comma separated); all by default.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// Per-trial system scores CSV for metrics without per-segment scores.
    #[arg(long)]
    pub replicates: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Human resampling scheme.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, conflicts_with = "two_sided")]
    pub one_sided: bool,
    #[arg(long)]
    pub two_sided: bool,
    /// Size grid (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<usize>,
}

#[derive(Deserialize, Debug, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub format: Option<String>,
    pub metric_scores: Option<PathBuf>,
    pub metrics: Option<Vec<String>>,
    pub replicates: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scheme: Option<Scheme>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub sidedness: Option<Sidedness>,
    pub grid: Option<Vec<usize>>,
    pub label_source: Option<String>,
    pub weighting: Option<String>,
    pub method: Option<String>,
    pub report_scope: Option<String>,
    pub sigmas: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub student_t: Option<bool>,
    pub synth: Option<GeneratorConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| input_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| input_error(format!("invalid config {}: {e}", path.display())))?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.metric_scores, &mut cfg.replicates, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub file: FileConfig,
    pub data: Option<PathBuf>,
    pub format: Option<Format>,
    pub metric_scores: Option<PathBuf>,
    pub metrics: Vec<String>,
    pub replicates: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub scheme: Scheme,
    pub alpha: f64,
    pub beta: f64,
    pub sidedness: Sidedness,
    pub grid: Vec<usize>,
}

impl Settings {
    pub fn resolve(c: &Common) -> Result<Self> {
        let file = match &c.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let format = match (&c.format, &file.format) {
            (Some(f), _) => Some(*f),
            (None, Some(s)) => Some(s.parse::<Format>().map_err(|e| input_error(e.to_string()))?),
            _ => None,
        };
        let sidedness = if c.two_sided {
            Sidedness::Two
        } else if c.one_sided {
            Sidedness::One
        } else {
            file.sidedness.unwrap_or_default()
        };
        Ok(Settings {
            data: c.data.clone().or_else(|| file.data.clone()),
            format,
            metric_scores: c.metric_scores.clone().or_else(|| file.metric_scores.clone()),
            metrics: if c.metrics.is_empty() {
                file.metrics.clone().unwrap_or_default()
            } else {
                c.metrics.clone()
            },
            replicates: c.replicates.clone().or_else(|| file.replicates.clone()),
            trials: c.trials.or(file.trials),
            seed: c.seed.or(file.seed),
            out: c
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            scheme: c.scheme.or(file.scheme).unwrap_or(Scheme::JudgmentLevel),
            alpha: c.alpha.or(file.alpha).unwrap_or(0.05),
            beta: c.beta.or(file.beta).unwrap_or(0.95),
            sidedness,
            grid: if c.grid.is_empty() {
                file.grid.clone().unwrap_or_default()
            } else {
                c.grid.clone()
            },
            file,
        })
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| input_error("a seed is required (--seed or `seed` in the config file)"))
    }

    pub fn data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| input_error("a dataset is required (--data or `data` in the config file)"))
    }

    pub fn data_format(&self) -> Result<Format> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        let path = self.data()?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("jsonl") | Some("json") => Ok(Format::Jsonl),
            _ => Err(input_error(format!(
                "cannot infer the format of {}; pass --format",
                path.display()
            ))),
        }
    }

    /// Creates the output directory and returns the path of `name` inside it.
    pub fn output(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| input_error(format!("cannot create output directory {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    pub fn create(&self, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
        let path = self.output(name)?;
        let f = std::fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(std::io::BufWriter::new(f))
    }

    /// Command-specific string option: flag, then config file, then default.
    pub fn pick<T: std::str::FromStr>(&self, flag: Option<T>, file: Option<&String>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match (flag, file) {
            (Some(v), _) => Ok(v),
            (None, Some(s)) => s.parse::<T>().map_err(|e| input_error(format!("{s:?}: {e}"))),
            (None, None) => Ok(default),
        }
    }
}
