//! Model hyperparameters and the flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::AdamWConfig;
use crate::segmenter::Language;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "EACS_SEED";

/// Order in which the two snippet encodings are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionOrder {
    /// Important-statement encoding first.
    ExAb,
    /// Whole-snippet encoding first.
    #[default]
    AbEx,
}

impl FromStr for FusionOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exab" => Ok(FusionOrder::ExAb),
            "abex" => Ok(FusionOrder::AbEx),
            other => Err(Error::Config(format!("unknown fusion order {other:?} (expected abex or exab)"))),
        }
    }
}

impl fmt::Display for FusionOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionOrder::ExAb => "exab",
            FusionOrder::AbEx => "abex",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub embed_dim: usize,
    /// Width of statement embeddings. The cross-statement encoder runs two
    /// directions of `hidden_dim / 2` each, so this must be even.
    pub hidden_dim: usize,
    pub dropout: f64,
    pub max_statement_tokens: usize,
    pub max_statements: usize,
    pub language: Language,
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        positive("embed_dim", self.embed_dim)?;
        positive("hidden_dim", self.hidden_dim)?;
        if !self.hidden_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("hidden_dim must be even, got {}", self.hidden_dim)));
        }
        dropout_ok(self.dropout)?;
        positive("max_statement_tokens", self.max_statement_tokens)?;
        positive("max_statements", self.max_statements)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstracterConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    /// Encoder input length, EOS included.
    pub max_code_tokens: usize,
    /// Decoder training length, BOS and EOS included.
    pub max_summary_len: usize,
    pub fusion: FusionOrder,
    /// Both encoders and the decoder read one embedding table.
    pub share_embeddings: bool,
}

impl AbstracterConfig {
    pub fn validate(&self) -> Result<()> {
        positive("embed_dim", self.embed_dim)?;
        positive("hidden_dim", self.hidden_dim)?;
        dropout_ok(self.dropout)?;
        positive("max_code_tokens", self.max_code_tokens)?;
        if self.max_summary_len < 2 {
            return Err(Error::Config("max_summary_len must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        positive("epochs", self.epochs)?;
        positive("batch_size", self.batch_size)?;
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", o.lr)));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if o.eps <= 0.0 || o.weight_decay < 0.0 {
            return Err(Error::Config("adam_eps must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

fn dropout_ok(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout must lie in [0, 1), got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small dimensions that train on one CPU core in minutes.
    Desk,
    /// Embedding/hidden 512, batch 32, lr 0.0003, dropout 0.1.
    Full,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

/// Everything a training command needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub min_freq: usize,
    pub vocab_size: usize,
    pub max_statement_tokens: usize,
    pub max_statements: usize,
    pub max_code_tokens: usize,
    pub max_summary_len: usize,
    pub language: Language,
    pub fusion: FusionOrder,
    pub share_embeddings: bool,
    pub corpus: Option<PathBuf>,
    pub valid_corpus: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

const KEYS: &[&str] = &[
    "preset",
    "embed_dim",
    "hidden_dim",
    "batch_size",
    "lr",
    "dropout",
    "epochs",
    "weight_decay",
    "beta1",
    "beta2",
    "adam_eps",
    "seed",
    "min_freq",
    "vocab_size",
    "max_statement_tokens",
    "max_statements",
    "max_code_tokens",
    "max_summary_len",
    "lang",
    "fusion",
    "share_embeddings",
    "corpus",
    "valid_corpus",
];

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = Self {
            preset,
            embed_dim: 64,
            hidden_dim: 64,
            batch_size: 32,
            lr: 3e-4,
            dropout: 0.1,
            epochs: 300,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            min_freq: 1,
            vocab_size: 2000,
            max_statement_tokens: 32,
            max_statements: 48,
            max_code_tokens: 200,
            max_summary_len: 32,
            language: Language::Java,
            fusion: FusionOrder::AbEx,
            share_embeddings: true,
            corpus: None,
            valid_corpus: None,
        };
        match preset {
            Preset::Desk => desk,
            Preset::Full => Self {
                embed_dim: 512,
                hidden_dim: 512,
                vocab_size: 30000,
                ..desk
            },
        }
    }

    /// Parses a flat `key = value` file body. Blank lines and `#` comments are
    /// ignored; a `preset` key selects the base values regardless of position.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", n + 1)));
            }
            entries.push((key.to_owned(), value.trim().trim_matches('"').to_owned()));
        }
        let preset = entries
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Preset::Desk);
        let mut config = Self::preset(preset);
        for (key, value) in &entries {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "preset" => self.preset = value.parse()?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "min_freq" => self.min_freq = num(key, value)?,
            "vocab_size" => self.vocab_size = num(key, value)?,
            "max_statement_tokens" => self.max_statement_tokens = num(key, value)?,
            "max_statements" => self.max_statements = num(key, value)?,
            "max_code_tokens" => self.max_code_tokens = num(key, value)?,
            "max_summary_len" => self.max_summary_len = num(key, value)?,
            "lang" => self.language = value.parse()?,
            "fusion" => self.fusion = value.parse()?,
            "share_embeddings" => self.share_embeddings = num(key, value)?,
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "valid_corpus" => self.valid_corpus = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::Config("vocab_size must be at least 4".into()));
        }
        positive("min_freq", self.min_freq)?;
        self.extractor().validate()?;
        self.abstracter().validate()?;
        self.train().validate()
    }

    pub fn extractor(&self) -> ExtractorConfig {
        ExtractorConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            dropout: self.dropout,
            max_statement_tokens: self.max_statement_tokens,
            max_statements: self.max_statements,
            language: self.language,
        }
    }

    pub fn abstracter(&self) -> AbstracterConfig {
        AbstracterConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            dropout: self.dropout,
            max_code_tokens: self.max_code_tokens,
            max_summary_len: self.max_summary_len,
            fusion: self.fusion,
            share_embeddings: self.share_embeddings,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: AdamWConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
                weight_decay: self.weight_decay,
            },
            seed: self.seed,
        }
    }
}
