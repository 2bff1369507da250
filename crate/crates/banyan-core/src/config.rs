//! Run configuration: embedding geometry, training hyperparameters, and the
//! `key = value` config-file format used by the CLI.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Geometry of one embedding: `channels` independent slices of
/// `channel_size` dimensions each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    /// Dimensions per channel (U).
    pub channel_size: usize,
    /// Number of channels (K).
    pub channels: usize,
}

impl EmbeddingConfig {
    pub fn new(channel_size: usize, channels: usize) -> Self {
        assert!(channel_size >= 1 && channels >= 1, "channel dims must be >= 1");
        Self { channel_size, channels }
    }

    /// Total embedding dimension D = U * K.
    #[inline]
    pub fn dim(&self) -> usize {
        self.channel_size * self.channels
    }
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        // 256-dimensional embeddings split into 128 two-dim channels.
        Self { channel_size: 2, channels: 128 }
    }
}

/// Which compose/decompose parameterisation the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    /// Elementwise sigmoid-gated sums; 7U non-embedding parameters.
    Diag,
    /// Concatenate-and-project linear maps; 4U^2 + 3U non-embedding parameters.
    Dense,
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionKind::Diag => "diag",
            FunctionKind::Dense => "dense",
        })
    }
}

impl FromStr for FunctionKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "diag" => Ok(FunctionKind::Diag),
            "dense" => Ok(FunctionKind::Dense),
            other => Err(ConfigError::BadValue {
                key: "functions".into(),
                value: other.into(),
                expected: "diag|dense",
            }),
        }
    }
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Reconstruct leaf tokens from downward embeddings.
    CrossEntropy,
    /// Draw together matching up/down embeddings across the batch.
    Contrastive,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::CrossEntropy => "ce",
            Objective::Contrastive => "contrastive",
        })
    }
}

impl FromStr for Objective {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "ce" => Ok(Objective::CrossEntropy),
            "contrastive" => Ok(Objective::Contrastive),
            other => Err(ConfigError::BadValue {
                key: "objective".into(),
                value: other.into(),
                expected: "ce|contrastive",
            }),
        }
    }
}

/// Which structure induction variant drives a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    /// Batch-wide deduplicated DAG.
    Entangled,
    /// Independent binary tree per sentence, no sharing.
    Sentential,
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureKind::Entangled => "entangled",
            StructureKind::Sentential => "sentential",
        })
    }
}

impl FromStr for StructureKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "entangled" => Ok(StructureKind::Entangled),
            "sentential" => Ok(StructureKind::Sentential),
            other => Err(ConfigError::BadValue {
                key: "structure".into(),
                value: other.into(),
                expected: "entangled|sentential",
            }),
        }
    }
}

/// Everything a training run needs beyond the corpus itself.
///
/// Defaults follow the reference hyperparameters: batch 512, 15 epochs,
/// dropout 0.2 on embeddings and 0.1 on the functions, temperature 0.2,
/// init range 0.1, and a learning rate of 1e-3 for cross-entropy or 1e-4
/// for the contrastive objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub structure: StructureKind,
    pub functions: FunctionKind,
    /// Learning rate; `None` resolves per objective.
    pub lr: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_embed: f64,
    pub dropout_fn: f64,
    /// Contrastive softmax temperature.
    pub tau: f64,
    /// Uniform init range for the embedding matrices.
    pub init_range: f64,
    pub seed: u64,
    /// Sentences longer than this are truncated at load time.
    pub max_len: usize,
    /// Channel size U.
    pub u: usize,
    /// Channel count K.
    pub k: usize,
    /// Tokens below this corpus frequency map to the unknown id.
    pub min_count: u64,
    /// Weight the reconstruction loss by leaf occurrence counts instead of
    /// averaging over unique leaf nodes.
    pub ce_per_occurrence: bool,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::CrossEntropy,
            structure: StructureKind::Entangled,
            functions: FunctionKind::Diag,
            lr: None,
            batch_size: 512,
            epochs: 15,
            dropout_embed: 0.2,
            dropout_fn: 0.1,
            tau: 0.2,
            init_range: 0.1,
            seed: 0,
            max_len: 128,
            u: 2,
            k: 128,
            min_count: 1,
            ce_per_occurrence: false,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    /// Effective learning rate: the explicit value if set, otherwise the
    /// per-objective default.
    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(match self.objective {
            Objective::CrossEntropy => 1e-3,
            Objective::Contrastive => 1e-4,
        })
    }

    pub fn embedding(&self) -> EmbeddingConfig {
        EmbeddingConfig::new(self.u, self.k)
    }

    /// Parse the `key = value` config format. Lines may carry `#` comments;
    /// unknown and duplicated keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = TrainConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey(key.into()));
            }
            seen.push(key.into());
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: value.into(),
                expected,
            })
        }
        match key {
            "objective" => self.objective = value.parse()?,
            "structure" => self.structure = value.parse()?,
            "functions" => self.functions = value.parse()?,
            "lr" => self.lr = Some(num(key, value, "positive float")?),
            "batch_size" => self.batch_size = num(key, value, "positive integer")?,
            "epochs" => self.epochs = num(key, value, "positive integer")?,
            "dropout_embed" => self.dropout_embed = num(key, value, "float in [0,1)")?,
            "dropout_fn" => self.dropout_fn = num(key, value, "float in [0,1)")?,
            "tau" => self.tau = num(key, value, "positive float")?,
            "init_range" => self.init_range = num(key, value, "positive float")?,
            "seed" => self.seed = num(key, value, "unsigned integer")?,
            "max_len" => self.max_len = num(key, value, "positive integer")?,
            "u" => self.u = num(key, value, "positive integer")?,
            "k" => self.k = num(key, value, "positive integer")?,
            "min_count" => self.min_count = num(key, value, "unsigned integer")?,
            "ce_per_occurrence" => self.ce_per_occurrence = num(key, value, "true|false")?,
            "clip_norm" => self.clip_norm = Some(num(key, value, "positive float")?),
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, what: &'static str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid(what))
            }
        }
        check(self.learning_rate() > 0.0, "lr must be > 0")?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(self.epochs >= 1, "epochs must be >= 1")?;
        check((0.0..1.0).contains(&self.dropout_embed), "dropout_embed must be in [0,1)")?;
        check((0.0..1.0).contains(&self.dropout_fn), "dropout_fn must be in [0,1)")?;
        check(self.tau > 0.0, "tau must be > 0")?;
        check(self.init_range > 0.0, "init_range must be > 0")?;
        check(self.max_len >= 1, "max_len must be >= 1")?;
        check(self.u >= 1 && self.k >= 1, "u and k must be >= 1")?;
        check(self.clip_norm.map_or(true, |c| c > 0.0), "clip_norm must be > 0")?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {0}: expected `key = value`")]
    BadLine(usize),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("duplicate config key `{0}`")]
    DuplicateKey(String),
    #[error("bad value `{value}` for `{key}` (expected {expected})")]
    BadValue { key: String, value: String, expected: &'static str },
    #[error("invalid config: {0}")]
    Invalid(&'static str),
}
