//! Run configuration: flat `key = value` files, CLI overrides, and hashing.
//!
//! A [`RunConfig`] is the single resolved source of truth for a pipeline run.
//! It is built in three layers — shipped defaults, then a config file, then
//! command-line overrides — and every field is settable through the same
//! string parser, so a `--eta 0.5` flag and an `eta = 0.5` file line go
//! through identical validation. The canonical rendering of a config (minus
//! the output directory) is hashed with SHA-256 and stamped into every
//! artifact the pipeline writes, tying outputs back to the exact settings
//! that produced them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::envs::GeneratorConfig;
use crate::nn::MlpSpec;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Everything a full run needs: training hyperparameters, contrastive
/// partition parameters, generator settings, evaluation settings, the seed
/// list, and the output directory.
///
/// Defaults are the shipped hyperparameter set (`alpha` 0.2, `gamma` 0.99,
/// `delta` 0.7, `eta` 0.25, `lr` 1e-4, batch 96, two 256-unit hidden layers,
/// dropout 0.25, top-50% desirable selection). `delta` accepts the full
/// closed range `[0, 1]`: both endpoints show up in sweeps, where 1.0
/// degenerates all weights to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Environment name; `point_hazard` is the only built-in continuous task.
    pub env: String,
    /// Optional pre-recorded dataset; when set, generation is skipped and
    /// every seed trains on this shared data.
    pub dataset: Option<PathBuf>,
    pub n_trajectories: usize,
    pub avoidance_gains: Vec<f64>,
    pub noise_scales: Vec<f64>,
    /// Hidden layer widths; input/output widths come from the environment.
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub pretrain_steps: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub segment_ratio: f64,
    pub delta: f64,
    pub eta: f64,
    pub x_pct: f64,
    pub y_pct: f64,
    pub cost_threshold: f64,
    pub eval_episodes: usize,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gen = GeneratorConfig::default();
        RunConfig {
            env: "point_hazard".into(),
            dataset: None,
            n_trajectories: gen.n_trajectories,
            avoidance_gains: gen.avoidance_gains,
            noise_scales: gen.noise_scales,
            hidden_sizes: vec![256, 256],
            dropout_rate: 0.25,
            pretrain_steps: 30_000,
            train_steps: 100_000,
            batch_size: 96,
            lr: 1e-4,
            alpha: 0.2,
            gamma: 0.99,
            segment_ratio: 1.0,
            delta: 0.7,
            eta: 0.25,
            x_pct: 50.0,
            y_pct: 0.0,
            cost_threshold: 8.0,
            eval_episodes: 20,
            epsilon: crate::eval::DEFAULT_EPSILON,
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|item| parse_scalar(key, item))
        .collect()
}

impl RunConfig {
    /// Assigns one field by its config-file key. CLI flags funnel through the
    /// same path, so both surfaces share parse errors and range checks.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "env" => self.env = value.trim().to_string(),
            "dataset" => self.dataset = Some(PathBuf::from(value.trim())),
            "n_trajectories" => self.n_trajectories = parse_scalar(key, value)?,
            "avoidance_gains" => self.avoidance_gains = parse_list(key, value)?,
            "noise_scales" => self.noise_scales = parse_list(key, value)?,
            "hidden_sizes" => self.hidden_sizes = parse_list(key, value)?,
            "dropout_rate" => self.dropout_rate = parse_scalar(key, value)?,
            "pretrain_steps" => self.pretrain_steps = parse_scalar(key, value)?,
            "train_steps" => self.train_steps = parse_scalar(key, value)?,
            "batch_size" => self.batch_size = parse_scalar(key, value)?,
            "lr" => self.lr = parse_scalar(key, value)?,
            "alpha" => self.alpha = parse_scalar(key, value)?,
            "gamma" => self.gamma = parse_scalar(key, value)?,
            "segment_ratio" => self.segment_ratio = parse_scalar(key, value)?,
            "delta" => self.delta = parse_scalar(key, value)?,
            "eta" => self.eta = parse_scalar(key, value)?,
            "x_pct" => self.x_pct = parse_scalar(key, value)?,
            "y_pct" => self.y_pct = parse_scalar(key, value)?,
            "cost_threshold" => self.cost_threshold = parse_scalar(key, value)?,
            "eval_episodes" => self.eval_episodes = parse_scalar(key, value)?,
            "epsilon" => self.epsilon = parse_scalar(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Range and consistency checks over the fully-resolved config, including
    /// existence of any referenced dataset path.
    pub fn validate(&self) -> Result<()> {
        if self.env != "point_hazard" {
            return Err(Error::Config(format!(
                "unknown env `{}` (supported: point_hazard)",
                self.env
            )));
        }
        if let Some(path) = &self.dataset {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "dataset path {} does not exist",
                    path.display()
                )));
            }
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config(
                "hidden_sizes must be a nonempty list of positive widths".into(),
            ));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be >= 1".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        self.generator_config(0).validate()?;
        self.to_train_config(0).validate()
    }

    /// The per-seed training view of this config.
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            pretrain_steps: self.pretrain_steps,
            train_steps: self.train_steps,
            batch_size: self.batch_size,
            lr: self.lr,
            alpha: self.alpha,
            gamma: self.gamma,
            segment_ratio: self.segment_ratio,
            delta: self.delta,
            eta: self.eta,
            x_pct: self.x_pct,
            y_pct: self.y_pct,
            cost_threshold: self.cost_threshold,
            dropout_rate: self.dropout_rate,
            seed,
        }
    }

    /// The per-seed generator view of this config.
    pub fn generator_config(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_trajectories: self.n_trajectories,
            avoidance_gains: self.avoidance_gains.clone(),
            noise_scales: self.noise_scales.clone(),
            seed,
        }
    }

    /// Network shape for the configured hidden widths and the environment's
    /// state/action dimensions.
    pub fn mlp_spec(&self, state_dim: usize, action_dim: usize) -> Result<MlpSpec> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(state_dim);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(action_dim);
        MlpSpec::new(sizes, self.dropout_rate)
    }

    /// Canonical `key = value` rendering, one field per line in fixed order.
    /// `out_dir` is deliberately excluded so that moving a run's outputs does
    /// not change its identity; it is recorded separately in the resolved
    /// config file.
    pub fn canonical_string(&self) -> String {
        fn join<T: std::fmt::Display>(items: &[T]) -> String {
            items
                .iter()
                .map(T::to_string)
                .collect::<Vec<_>>()
                .join(",")
        }
        let mut s = String::new();
        let _ = writeln!(s, "env = {}", self.env);
        if let Some(path) = &self.dataset {
            let _ = writeln!(s, "dataset = {}", path.display());
        }
        let _ = writeln!(s, "n_trajectories = {}", self.n_trajectories);
        let _ = writeln!(s, "avoidance_gains = {}", join(&self.avoidance_gains));
        let _ = writeln!(s, "noise_scales = {}", join(&self.noise_scales));
        let _ = writeln!(s, "hidden_sizes = {}", join(&self.hidden_sizes));
        let _ = writeln!(s, "dropout_rate = {}", self.dropout_rate);
        let _ = writeln!(s, "pretrain_steps = {}", self.pretrain_steps);
        let _ = writeln!(s, "train_steps = {}", self.train_steps);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "segment_ratio = {}", self.segment_ratio);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "x_pct = {}", self.x_pct);
        let _ = writeln!(s, "y_pct = {}", self.y_pct);
        let _ = writeln!(s, "cost_threshold = {}", self.cost_threshold);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        s
    }

    /// SHA-256 of [`Self::canonical_string`], hex-encoded. Stamped into every
    /// artifact so outputs are traceable to the config that produced them.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}

/// Applies one flat `key = value` file on top of `cfg`. Lines are trimmed;
/// blank lines and `#` comments are skipped; later assignments win.
pub fn apply_config_text(cfg: &mut RunConfig, text: &str, origin: &Path) -> Result<()> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(())
}

/// Resolves a full config: defaults, then the optional file, then CLI
/// overrides (flag name/value pairs), then validation.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        apply_config_text(&mut cfg, &text, path)?;
    }
    for (key, value) in overrides {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
