//! Experiment configuration.
//!
//! Settings are flat `key=value` pairs. Built-in defaults are overlaid by a
//! config file, which is overlaid by command-line flags. `#` starts a comment.
//!
//! | key                  | default      |
//! |----------------------|--------------|
//! | dataset.train        | train.txt    |
//! | dataset.valid        | valid.txt    |
//! | dataset.test         | test.txt     |
//! | model.family         | transe       |
//! | model.norm           | l1           |
//! | model.dim            | 100          |
//! | model.gamma          | 6.0          |
//! | model.init_bound     | (family default) |
//! | train.criterion      | sf           |
//! | train.batch_size     | 256          |
//! | train.m / k / n      | 256 / 30 / 100 |
//! | train.lr             | (required)   |
//! | train.beta1 / beta2 / eps | 0.9 / 0.999 / 1e-8 |
//! | train.epochs         | 100          |
//! | train.eval_every     | 10           |
//! | train.seed           | 0            |
//! | train.side           | both         |
//! | train.step           | batch        |
//! | train.include_hard   | false        |
//! | train.filtered       | false        |
//! | train.l2             | 0            |
//! | train.threads        | 0 (all cores)|
//! | train.deterministic  | false        |
//! | output.dir           | runs/mixkg   |
//!
//! Relative dataset paths are resolved against `$MIXKG_DATA_DIR` when set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use mixkg::model::AdamConfig;
use mixkg::negative_sampler::{Criterion, SamplerConfig};
use mixkg::trainer::{SidePolicy, StepMode, TrainConfig};
use mixkg::{Execution, Family, Norm, ScoreFamily};

pub const DATA_DIR_ENV: &str = "MIXKG_DATA_DIR";

const DEFAULTS: &[(&str, &str)] = &[
    ("dataset.train", "train.txt"),
    ("dataset.valid", "valid.txt"),
    ("dataset.test", "test.txt"),
    ("model.family", "transe"),
    ("model.norm", "l1"),
    ("model.dim", "100"),
    ("model.gamma", "6.0"),
    ("train.criterion", "sf"),
    ("train.batch_size", "256"),
    ("train.m", "256"),
    ("train.k", "30"),
    ("train.n", "100"),
    ("train.beta1", "0.9"),
    ("train.beta2", "0.999"),
    ("train.eps", "1e-8"),
    ("train.epochs", "100"),
    ("train.eval_every", "10"),
    ("train.seed", "0"),
    ("train.side", "both"),
    ("train.step", "batch"),
    ("train.include_hard", "false"),
    ("train.filtered", "false"),
    ("train.l2", "0"),
    ("train.threads", "0"),
    ("train.deterministic", "false"),
    ("output.dir", "runs/mixkg"),
];

const OPTIONAL: &[&str] = &["train.lr", "model.init_bound"];

/// Raw layered settings before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Default for Settings {
    fn default() -> Self {
        Settings(DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }
}

fn known(key: &str) -> bool {
    DEFAULTS.iter().any(|(k, _)| *k == key) || OPTIONAL.contains(&key)
}

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !known(key) {
            bail!("unknown config key {key:?}");
        }
        self.0.insert(key.to_owned(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Overlays `key=value` lines.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key=value", n + 1))?;
            self.set(k.trim(), v.trim()).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Sorted `key=value` lines, readable back with [`Settings::apply_text`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key).ok_or_else(|| anyhow!("missing required config key {key}"))?;
        raw.parse().map_err(|e| anyhow!("invalid value {raw:?} for {key}: {e}"))
    }

    fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|_| self.parse(key)).transpose()
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        let path = |key: &str| -> Result<PathBuf> {
            let p = PathBuf::from(self.parse::<String>(key)?);
            Ok(match &data_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            })
        };
        let side_policy = match self.parse::<String>("train.side")?.as_str() {
            "both" => SidePolicy::Both,
            "tail" => SidePolicy::TailOnly,
            other => bail!("invalid value {other:?} for train.side (both|tail)"),
        };
        let step_mode = match self.parse::<String>("train.step")?.as_str() {
            "batch" => StepMode::Batch,
            "triplet" => StepMode::Triplet,
            other => bail!("invalid value {other:?} for train.step (batch|triplet)"),
        };
        let deterministic: bool = self.parse("train.deterministic")?;
        let adam = AdamConfig {
            lr: self.parse("train.lr")?,
            beta1: self.parse("train.beta1")?,
            beta2: self.parse("train.beta2")?,
            eps: self.parse("train.eps")?,
        };
        let cfg = ExperimentConfig {
            train_path: path("dataset.train")?,
            valid_path: path("dataset.valid")?,
            test_path: path("dataset.test")?,
            scorer: ScoreFamily::new(
                self.parse::<Family>("model.family")?,
                self.parse::<Norm>("model.norm")?,
                self.parse("model.gamma")?,
            ),
            dim: self.parse("model.dim")?,
            init_bound: self.parse_opt("model.init_bound")?,
            threads: self.parse("train.threads")?,
            deterministic,
            out_dir: PathBuf::from(self.parse::<String>("output.dir")?),
            train: TrainConfig {
                batch_size: self.parse("train.batch_size")?,
                sampler: SamplerConfig {
                    m: self.parse("train.m")?,
                    k: self.parse("train.k")?,
                    n: self.parse("train.n")?,
                    criterion: self.parse::<Criterion>("train.criterion")?,
                    include_hard: self.parse("train.include_hard")?,
                    filtered: self.parse("train.filtered")?,
                    single_passthrough: false,
                },
                epochs: self.parse("train.epochs")?,
                adam,
                seed: self.parse("train.seed")?,
                side_policy,
                step_mode,
                l2: self.parse("train.l2")?,
                eval_every: self.parse("train.eval_every")?,
                execution: if deterministic { Execution::Sequential } else { Execution::Parallel },
            },
        };
        if cfg.dim == 0 {
            bail!("model.dim must be positive");
        }
        cfg.train.validate(&cfg.scorer)?;
        Ok(cfg)
    }
}

/// Fully validated settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train_path: PathBuf,
    pub valid_path: PathBuf,
    pub test_path: PathBuf,
    pub scorer: ScoreFamily,
    pub dim: usize,
    pub init_bound: Option<f64>,
    pub threads: usize,
    pub deterministic: bool,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_lr() -> Settings {
        let mut s = Settings::default();
        s.set("train.lr", "0.01").unwrap();
        s
    }

    #[test]
    fn learning_rate_is_required() {
        let err = Settings::default().resolve().unwrap_err();
        assert!(err.to_string().contains("train.lr"));
        assert!(with_lr().resolve().is_ok());
    }

    #[test]
    fn file_then_flags_precedence() {
        let mut s = with_lr();
        s.apply_text("train.k = 5 # comment\nmodel.family=rotate\n\n", "cfg").unwrap();
        s.set("train.k", "7").unwrap();
        let cfg = s.resolve().unwrap();
        assert_eq!(cfg.train.sampler.k, 7);
        assert_eq!(cfg.scorer.family, Family::RotatE);
        assert_eq!(cfg.train.sampler.m, 256);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut s = with_lr();
        assert!(s.apply_text("train.kk=3", "cfg").is_err());
        assert!(s.apply_text("no equals sign", "cfg").is_err());
        s.set("train.k", "999").unwrap();
        assert!(s.resolve().is_err(), "K > M must fail");
        let mut s = with_lr();
        s.set("model.family", "conve").unwrap();
        assert!(s.resolve().is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut s = with_lr();
        s.set("model.init_bound", "0.3").unwrap();
        let mut back = Settings::default();
        back.apply_text(&s.render(), "rendered").unwrap();
        assert_eq!(back, s);
        assert_eq!(back.resolve().unwrap().init_bound, Some(0.3));
    }
}
