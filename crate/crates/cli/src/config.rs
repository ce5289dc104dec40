//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mocogan::backend::AdamConfig;
use mocogan::latent::LatentConfig;
use mocogan::networks::{ArchConfig, DvMode};
use mocogan::training::{GenLossMode, TrainConfig};

/// Every accepted key, in the order `config.resolved` lists them.
pub const KEYS: &[&str] = &[
    "d_c",
    "d_m",
    "d_e",
    "d_a",
    "image_size",
    "base_channels",
    "T",
    "batch_size",
    "iterations",
    "lr",
    "beta1",
    "beta2",
    "lambda_info",
    "gen_loss_mode",
    "dv_mode",
    "supervised_q",
    "q_on_fakes",
    "seed",
    "dataset_path",
    "out_dir",
    "checkpoint_every",
    "log_every",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub d_c: usize,
    pub d_m: usize,
    pub d_e: usize,
    pub d_a: usize,
    pub image_size: usize,
    pub base_channels: usize,
    pub t: usize,
    pub batch_size: usize,
    pub iterations: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_info: f64,
    pub gen_loss_mode: GenLossMode,
    pub dv_mode: DvMode,
    pub supervised_q: bool,
    pub q_on_fakes: bool,
    pub seed: u64,
    pub dataset_path: PathBuf,
    pub out_dir: PathBuf,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let latent = LatentConfig::default();
        let arch = ArchConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            d_c: latent.d_c,
            d_m: latent.d_m,
            d_e: latent.d_e,
            d_a: latent.d_a,
            image_size: arch.image_size,
            base_channels: arch.base_channels,
            t: arch.t,
            batch_size: train.batch_size,
            iterations: train.iterations,
            lr: train.adam.lr,
            beta1: train.adam.beta1,
            beta2: train.adam.beta2,
            lambda_info: train.lambda_info,
            gen_loss_mode: train.gen_loss,
            dv_mode: arch.dv_mode,
            supervised_q: false,
            q_on_fakes: true,
            seed: 0,
            dataset_path: PathBuf::from("shapes.smv"),
            out_dir: PathBuf::from("run"),
            checkpoint_every: 1000,
            log_every: 100,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::Error::new(mocogan::Error::Config(format!("{key} = {value:?}: {e}"))))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "d_c" => self.d_c = parse(key, value)?,
            "d_m" => self.d_m = parse(key, value)?,
            "d_e" => self.d_e = parse(key, value)?,
            "d_a" => self.d_a = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "T" => self.t = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "lambda_info" => self.lambda_info = parse(key, value)?,
            "gen_loss_mode" => self.gen_loss_mode = parse(key, value)?,
            "dv_mode" => self.dv_mode = parse(key, value)?,
            "supervised_q" => self.supervised_q = parse(key, value)?,
            "q_on_fakes" => self.q_on_fakes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dataset_path" => self.dataset_path = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            other => bail!(mocogan::Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                mocogan::Error::Config(format!("line {}: expected `key = value`, got {line:?}", i + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(mocogan::Error::from)
            .with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| mocogan::Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value)
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "d_c" => self.d_c.to_string(),
            "d_m" => self.d_m.to_string(),
            "d_e" => self.d_e.to_string(),
            "d_a" => self.d_a.to_string(),
            "image_size" => self.image_size.to_string(),
            "base_channels" => self.base_channels.to_string(),
            "T" => self.t.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "iterations" => self.iterations.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "lambda_info" => self.lambda_info.to_string(),
            "gen_loss_mode" => self.gen_loss_mode.to_string(),
            "dv_mode" => self.dv_mode.to_string(),
            "supervised_q" => self.supervised_q.to_string(),
            "q_on_fakes" => self.q_on_fakes.to_string(),
            "seed" => self.seed.to_string(),
            "dataset_path" => self.dataset_path.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "log_every" => self.log_every.to_string(),
            _ => unreachable!("KEYS lists only known keys"),
        }
    }

    /// The effective configuration in the same format [`apply_text`] reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.value_of(key)).expect("writing to a String");
        }
        out
    }

    pub fn latent(&self) -> LatentConfig {
        LatentConfig {
            d_c: self.d_c,
            d_m: self.d_m,
            d_e: self.d_e,
            d_a: self.d_a,
        }
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            image_size: self.image_size,
            base_channels: self.base_channels,
            latent_dim: self.d_c + self.d_m,
            t: self.t,
            d_a: self.d_a,
            dv_mode: self.dv_mode,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            iterations: self.iterations,
            t: self.t,
            gen_loss: self.gen_loss_mode,
            lambda_info: self.lambda_info,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                ..AdamConfig::default()
            },
            supervised_q: self.supervised_q,
            q_on_fakes: self.q_on_fakes,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.latent().validate()?;
        self.arch().validate()?;
        self.train().validate()?;
        if self.checkpoint_every == 0 || self.log_every == 0 {
            bail!(mocogan::Error::Config("checkpoint_every and log_every must be positive".into()));
        }
        Ok(())
    }
}
