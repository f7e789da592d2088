//! Run configuration: typed settings plus an INI-style text form.
//!
//! The text form is what gets written next to run outputs and embedded in
//! checkpoints, so [`RunConfig::to_text`] is deterministic and round-trips
//! through [`RunConfig::parse`].

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Condition on a label or attribute vector.
    Attribute,
    /// Condition on the frozen embedder's identity feature, with identity loss.
    Identity,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Attribute => "attribute",
            Mode::Identity => "identity",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "attribute" => Ok(Mode::Attribute),
            "identity" => Ok(Mode::Identity),
            other => Err(format!("unknown mode `{other}` (attribute | identity)")),
        }
    }
}

/// Network shapes. `cond_dim` is the length of the condition vector fed to
/// `G_{Y->X}` and `D_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub image_channels: usize,
    pub image_size: usize,
    pub cond_dim: usize,
    pub gen_base: usize,
    pub res_blocks: usize,
    pub disc_base: usize,
    pub embed_dim: usize,
    pub num_classes: usize,
}

impl ArchConfig {
    /// Desk-scale MNIST: 1x28x28 digits, one-hot labels.
    pub fn mnist() -> Self {
        Self {
            image_channels: 1,
            image_size: 28,
            cond_dim: 10,
            gen_base: 32,
            res_blocks: 4,
            disc_base: 32,
            embed_dim: 32,
            num_classes: 10,
        }
    }

    /// 3x128x128 faces with 18 binary attributes and a 64-channel `conv1`.
    pub fn faces() -> Self {
        Self {
            image_channels: 3,
            image_size: 128,
            cond_dim: 18,
            gen_base: 64,
            res_blocks: 6,
            disc_base: 64,
            embed_dim: 32,
            num_classes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_channels", self.image_channels),
            ("image_size", self.image_size),
            ("cond_dim", self.cond_dim),
            ("gen_base", self.gen_base),
            ("disc_base", self.disc_base),
            ("embed_dim", self.embed_dim),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("arch.{name} must be positive")));
            }
        }
        if self.image_size % 4 != 0 {
            return Err(Error::config(format!(
                "arch.image_size {} must be divisible by 4",
                self.image_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Registered optimizer name, see [`crate::optim::OptimizerRegistry`].
    pub kind: String,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: "adam".into(),
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub seed: u64,
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerConfig,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Weight of the identity loss; only used in identity mode.
    pub identity_weight: f64,
    pub checkpoint_interval: u64,
    pub log_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Attribute,
            seed: 1,
            iterations: 4000,
            batch_size: 16,
            learning_rate: 2e-4,
            optimizer: OptimizerConfig::default(),
            lambda1: 10.0,
            lambda2: 10.0,
            identity_weight: 1.0,
            checkpoint_interval: 1000,
            log_interval: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::config("train.iterations must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        // zero is allowed: it freezes all parameters
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("train.learning_rate must be finite and non-negative"));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::config("train.lambda1/lambda2 must be non-negative"));
        }
        if self.identity_weight < 0.0 {
            return Err(Error::config("train.identity_weight must be non-negative"));
        }
        Ok(())
    }

    /// Identity-loss weight actually applied in this mode.
    pub fn effective_identity_weight(&self) -> f64 {
        match self.mode {
            Mode::Identity => self.identity_weight,
            Mode::Attribute => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub low_res_factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    /// Frozen identity embedder (identity mode).
    pub checkpoint: Option<PathBuf>,
    /// Separately seeded classifier used to measure label fidelity.
    pub oracle_checkpoint: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            oracle_checkpoint: None,
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub embedder: EmbedderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig {
                low_res_factor: 4,
                ..DataConfig::default()
            },
            arch: ArchConfig::mnist(),
            train: TrainConfig::default(),
            embedder: EmbedderConfig::default(),
        }
    }
}

fn parse_value<V: FromStr>(line: usize, key: &str, raw: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| Error::ConfigParse {
        line,
        message: format!("bad value `{raw}` for `{key}`: {e}"),
    })
}

fn opt_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Parses INI-style text on top of the defaults. Unknown sections or keys
    /// are rejected with their line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::ConfigParse {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                section = name.trim().to_string();
                if !matches!(
                    section.as_str(),
                    "run" | "data" | "arch" | "train" | "embedder" | "checkpoint"
                ) {
                    return Err(Error::ConfigParse {
                        line: line_no,
                        message: format!("unknown section [{section}]"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("key `{key}` outside any section"),
                });
            }
            cfg.set_at(line_no, &section, key, value)?;
        }
        Ok(cfg)
    }

    /// Applies one `section.key = value` override, as given on a command line.
    pub fn set(&mut self, dotted_key: &str, value: &str) -> Result<()> {
        let (section, key) = dotted_key
            .split_once('.')
            .ok_or_else(|| Error::config(format!("override `{dotted_key}` must be section.key")))?;
        self.set_at(0, section, key, value)
    }

    fn set_at(&mut self, line: usize, section: &str, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::ConfigParse {
            line,
            message: format!("unknown key `{key}` in [{section}]"),
        };
        let t = &mut self.train;
        let a = &mut self.arch;
        let d = &mut self.data;
        let e = &mut self.embedder;
        match (section, key) {
            ("run", "mode") => t.mode = parse_value(line, key, value)?,
            ("run", "seed") => t.seed = parse_value(line, key, value)?,
            ("run", "output_dir") => self.output_dir = PathBuf::from(value),

            ("data", "train_images") => d.train_images = opt_path(value),
            ("data", "train_labels") => d.train_labels = opt_path(value),
            ("data", "test_images") => d.test_images = opt_path(value),
            ("data", "test_labels") => d.test_labels = opt_path(value),
            ("data", "low_res_factor") => d.low_res_factor = parse_value(line, key, value)?,

            ("arch", "image_channels") => a.image_channels = parse_value(line, key, value)?,
            ("arch", "image_size") => a.image_size = parse_value(line, key, value)?,
            ("arch", "cond_dim") => a.cond_dim = parse_value(line, key, value)?,
            ("arch", "gen_base") => a.gen_base = parse_value(line, key, value)?,
            ("arch", "res_blocks") => a.res_blocks = parse_value(line, key, value)?,
            ("arch", "disc_base") => a.disc_base = parse_value(line, key, value)?,
            ("arch", "embed_dim") => a.embed_dim = parse_value(line, key, value)?,
            ("arch", "num_classes") => a.num_classes = parse_value(line, key, value)?,

            ("train", "iterations") => t.iterations = parse_value(line, key, value)?,
            ("train", "batch_size") => t.batch_size = parse_value(line, key, value)?,
            ("train", "learning_rate") => t.learning_rate = parse_value(line, key, value)?,
            ("train", "optimizer") => t.optimizer.kind = value.to_string(),
            ("train", "beta1") => t.optimizer.beta1 = parse_value(line, key, value)?,
            ("train", "beta2") => t.optimizer.beta2 = parse_value(line, key, value)?,
            ("train", "epsilon") => t.optimizer.epsilon = parse_value(line, key, value)?,
            ("train", "lambda1") => t.lambda1 = parse_value(line, key, value)?,
            ("train", "lambda2") => t.lambda2 = parse_value(line, key, value)?,
            ("train", "identity_weight") => t.identity_weight = parse_value(line, key, value)?,
            ("train", "checkpoint_interval") => {
                t.checkpoint_interval = parse_value(line, key, value)?
            }
            ("train", "log_interval") => t.log_interval = parse_value(line, key, value)?,

            ("embedder", "checkpoint") => e.checkpoint = opt_path(value),
            ("embedder", "oracle_checkpoint") => e.oracle_checkpoint = opt_path(value),
            ("embedder", "epochs") => e.epochs = parse_value(line, key, value)?,
            ("embedder", "batch_size") => e.batch_size = parse_value(line, key, value)?,
            ("embedder", "learning_rate") => e.learning_rate = parse_value(line, key, value)?,
            ("embedder", "seed") => e.seed = parse_value(line, key, value)?,

            // written by checkpoints; not part of the run settings
            ("checkpoint", _) => {}
            _ => return Err(unknown()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        if self.data.low_res_factor == 0 {
            return Err(Error::config("data.low_res_factor must be positive"));
        }
        Ok(())
    }

    /// Fully resolved configuration in the same syntax [`RunConfig::parse`]
    /// accepts.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let a = &self.arch;
        let d = &self.data;
        let e = &self.embedder;
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "mode = {}", t.mode.as_str());
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "train_images = {}", path_text(&d.train_images));
        let _ = writeln!(s, "train_labels = {}", path_text(&d.train_labels));
        let _ = writeln!(s, "test_images = {}", path_text(&d.test_images));
        let _ = writeln!(s, "test_labels = {}", path_text(&d.test_labels));
        let _ = writeln!(s, "low_res_factor = {}", d.low_res_factor);
        let _ = writeln!(s, "\n[arch]");
        let _ = writeln!(s, "image_channels = {}", a.image_channels);
        let _ = writeln!(s, "image_size = {}", a.image_size);
        let _ = writeln!(s, "cond_dim = {}", a.cond_dim);
        let _ = writeln!(s, "gen_base = {}", a.gen_base);
        let _ = writeln!(s, "res_blocks = {}", a.res_blocks);
        let _ = writeln!(s, "disc_base = {}", a.disc_base);
        let _ = writeln!(s, "embed_dim = {}", a.embed_dim);
        let _ = writeln!(s, "num_classes = {}", a.num_classes);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "iterations = {}", t.iterations);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", t.learning_rate);
        let _ = writeln!(s, "optimizer = {}", t.optimizer.kind);
        let _ = writeln!(s, "beta1 = {:?}", t.optimizer.beta1);
        let _ = writeln!(s, "beta2 = {:?}", t.optimizer.beta2);
        let _ = writeln!(s, "epsilon = {:?}", t.optimizer.epsilon);
        let _ = writeln!(s, "lambda1 = {:?}", t.lambda1);
        let _ = writeln!(s, "lambda2 = {:?}", t.lambda2);
        let _ = writeln!(s, "identity_weight = {:?}", t.identity_weight);
        let _ = writeln!(s, "checkpoint_interval = {}", t.checkpoint_interval);
        let _ = writeln!(s, "log_interval = {}", t.log_interval);
        let _ = writeln!(s, "\n[embedder]");
        let _ = writeln!(s, "checkpoint = {}", path_text(&e.checkpoint));
        let _ = writeln!(s, "oracle_checkpoint = {}", path_text(&e.oracle_checkpoint));
        let _ = writeln!(s, "epochs = {}", e.epochs);
        let _ = writeln!(s, "batch_size = {}", e.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", e.learning_rate);
        let _ = writeln!(s, "seed = {}", e.seed);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.train.mode = Mode::Identity;
        cfg.train.learning_rate = 1.5e-4;
        cfg.data.train_images = Some("a/b".into());
        cfg.arch.res_blocks = 2;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::parse("[run]\nseed = 3\n\n[train]\nbogus = 1\n").unwrap_err();
        match err {
            Error::ConfigParse { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_and_unknown_section() {
        assert!(matches!(
            RunConfig::parse("[train]\niterations = many").unwrap_err(),
            Error::ConfigParse { line: 2, .. }
        ));
        assert!(matches!(
            RunConfig::parse("[nope]").unwrap_err(),
            Error::ConfigParse { line: 1, .. }
        ));
        assert!(RunConfig::parse("seed = 1").is_err());
    }

    #[test]
    fn overrides_and_validation() {
        let mut cfg = RunConfig::default();
        cfg.set("train.iterations", "0").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("train.iterations", "5").unwrap();
        cfg.validate().unwrap();
        assert!(cfg.set("iterations", "5").is_err());
        cfg.set("train.learning_rate", "-1").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn identity_weight_only_applies_in_identity_mode() {
        let mut t = TrainConfig::default();
        assert_eq!(t.effective_identity_weight(), 0.0);
        t.mode = Mode::Identity;
        assert_eq!(t.effective_identity_weight(), 1.0);
    }
}
