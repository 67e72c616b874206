//! Audit configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use valence_core::{PermutationConfig, SvcConfig};

use crate::error::AuditError;

pub const DEFAULT_Q: f64 = 0.10;
pub const DEFAULT_COVERAGE: f64 = 0.95;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_MAX_EXACT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    Combinations,
    Permutations,
}

/// Every field is optional so that a config file and flags can be merged;
/// flags win. Path templates may contain `{layer}`.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Model name recorded in outputs (defaults to the input files' model).
    #[arg(long)]
    pub model: Option<String>,
    /// Layer selection: `12`, `0,6,12` or `all`.
    #[arg(long)]
    pub layers: Option<String>,
    /// Model layer count, used to expand `--layers all`.
    #[arg(long)]
    pub num_layers: Option<u32>,
    /// Pleasant stimulus VEMB path template.
    #[arg(long)]
    pub pleasant: Option<String>,
    /// Unpleasant stimulus VEMB path template.
    #[arg(long)]
    pub unpleasant: Option<String>,
    /// Pleasant word list (one per line); defaults to the shipped 25 words.
    #[arg(long)]
    pub pleasant_words: Option<PathBuf>,
    #[arg(long)]
    pub unpleasant_words: Option<PathBuf>,
    /// Valence lexicon CSV with `word,rating` columns.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Embedding VEMB path template (lexicon words or `person|<context>` records).
    #[arg(long)]
    pub embeddings: Option<String>,
    /// Direction VEMB path template; defaults to `<out>/direction.L{layer}.vemb`.
    #[arg(long)]
    pub direction: Option<String>,
    /// Taxonomy CSV (`name,category_a,category_b,r`); defaults to the shipped one.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub svc_c: Option<f64>,
    #[arg(long)]
    pub svc_tolerance: Option<f64>,
    #[arg(long)]
    pub svc_max_iterations: Option<usize>,
    #[arg(long)]
    pub max_exact: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed for sampled permutation tests; required whenever sampling is used.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decile fraction for `rank`.
    #[arg(long)]
    pub q: Option<f64>,
    /// Minimum lexicon coverage before `valnorm` warns.
    #[arg(long)]
    pub coverage_threshold: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub exclude_training_overlap: Option<bool>,
    /// Swap the A/B roles of every bias pair.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub swap: Option<bool>,
    #[arg(long, value_enum)]
    pub mode: Option<ContextMode>,
    /// Bias names for permutation contexts (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub biases: Option<Vec<String>>,
    #[arg(long)]
    pub article: Option<String>,
    /// Category words rendered capitalized (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub capitalize: Option<Vec<String>>,
    /// Permit permutation contexts over a pair count other than five.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_general: Option<bool>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),+ $(,)?) => {
        AuditConfig { $($field: $top.$field.or($base.$field)),+ }
    };
}

impl AuditConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, AuditError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| AuditError::input(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `top` override those in `self`.
    pub fn overlay(self, top: AuditConfig) -> AuditConfig {
        overlay!(
            self, top, model, layers, num_layers, pleasant, unpleasant, pleasant_words,
            unpleasant_words, lexicon, embeddings, direction, taxonomy, svc_c, svc_tolerance,
            svc_max_iterations, max_exact, samples, seed, q, coverage_threshold,
            exclude_training_overlap, swap, mode, biases, article, capitalize, allow_general, out,
        )
    }

    /// SHA-256 over the canonical JSON of every field except the output
    /// directory, prefixed by the command name.
    pub fn digest(&self, command: &str) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(json.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn out_dir(&self) -> Result<&Path, AuditError> {
        self.out
            .as_deref()
            .ok_or_else(|| AuditError::input("missing --out <dir>"))
    }

    pub fn svc(&self) -> SvcConfig {
        let d = SvcConfig::default();
        SvcConfig {
            c: self.svc_c.unwrap_or(d.c),
            tolerance: self.svc_tolerance.unwrap_or(d.tolerance),
            max_iterations: self.svc_max_iterations.unwrap_or(d.max_iterations),
        }
    }

    /// Permutation settings for groups of the given sizes; fails when
    /// sampling is needed and no seed was supplied.
    pub fn permutation(&self, n_a: usize, n_b: usize) -> Result<PermutationConfig, AuditError> {
        let cfg = PermutationConfig {
            max_exact: self.max_exact.unwrap_or(DEFAULT_MAX_EXACT),
            samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: self.seed.unwrap_or(0),
        };
        if self.seed.is_none() && cfg.needs_sampling(n_a, n_b) {
            return Err(AuditError::input(format!(
                "groups of {n_a} and {n_b} need a sampled permutation test; pass --seed"
            )));
        }
        Ok(cfg)
    }

    pub fn q(&self) -> Result<f64, AuditError> {
        let q = self.q.unwrap_or(DEFAULT_Q);
        if !(q > 0.0 && q <= 1.0) {
            return Err(AuditError::input(format!("--q must lie in (0, 1], got {q}")));
        }
        Ok(q)
    }

    pub fn coverage_threshold(&self) -> f64 {
        self.coverage_threshold.unwrap_or(DEFAULT_COVERAGE)
    }

    pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, AuditError> {
        value
            .as_ref()
            .ok_or_else(|| AuditError::input(format!("missing {flag}")))
    }

    /// Expands `--layers`; `all` needs a layer count from `--num-layers` or
    /// from `fallback_count`.
    pub fn layer_list(&self, fallback_count: impl FnOnce() -> Option<u32>) -> Result<Vec<u32>, AuditError> {
        let selection = Self::require(&self.layers, "--layers")?.trim();
        if selection.eq_ignore_ascii_case("all") {
            let count = self.num_layers.or_else(fallback_count).ok_or_else(|| {
                AuditError::input("--layers all needs --num-layers or a layer_count in the layer-0 input")
            })?;
            return Ok((0..=count).collect());
        }
        let mut layers = selection
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| AuditError::input(format!("bad layer {t:?} in --layers")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        layers.sort_unstable();
        layers.dedup();
        Ok(layers)
    }
}

/// Substitutes `{layer}` in a path template.
pub fn layer_path(template: &str, layer: u32) -> PathBuf {
    PathBuf::from(template.replace("{layer}", &layer.to_string()))
}
