//! Experiment configuration, read from one TOML file.
//!
//! ```toml
//! languages = ["es", "it", "de"]
//! lexicon_dir = "lexicons"
//! transcripts_dir = "transcripts"
//! embeddings_path = "embeddings.txt"
//! dictionary_path = "dictionary.tsv"
//! out_dir = "out"
//! seed = 7
//!
//! [backend]
//! kind = "replay"
//! model = "synthetic"
//! transcript_path = "transcripts"
//!
//! [train]
//! epochs = 200
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Overrides (`key=value`, dotted keys for tables) are applied before
//! deserialization, so they obey the same schema and defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::TrainConfig;
use crate::describe::DEFAULT_TOP_P;
use crate::embed::{Weighting, DEFAULT_OOV_WARNING};
use crate::error::{Error, Result};
use crate::gateway::{BackendSpec, DEFAULT_SAMPLES};
use crate::lexicon::LanguageCode;
use crate::metrics::DEFAULT_MIN_SUPPORT;
use crate::translate::MissPolicy;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranslatorMode {
    #[default]
    Dictionary,
    Online,
}

fn d_translate_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatorConfig {
    #[serde(default)]
    pub mode: TranslatorMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub miss_policy: MissPolicy,
    #[serde(default = "d_translate_timeout")]
    pub timeout_secs: f64,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        TranslatorConfig {
            mode: TranslatorMode::default(),
            endpoint: None,
            miss_policy: MissPolicy::default(),
            timeout_secs: d_translate_timeout(),
        }
    }
}

fn d_samples() -> usize {
    DEFAULT_SAMPLES
}
fn d_top_p() -> usize {
    DEFAULT_TOP_P
}
fn d_transcripts() -> PathBuf {
    "transcripts".into()
}
fn d_out() -> PathBuf {
    "out".into()
}
fn d_parallel() -> usize {
    4
}
fn d_oov() -> f64 {
    DEFAULT_OOV_WARNING
}
fn d_support() -> usize {
    DEFAULT_MIN_SUPPORT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub languages: Vec<LanguageCode>,
    /// Directory of `{lang}.tsv` lexicons. A synthetic backend supplies its
    /// own lexicons when this is unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_dir: Option<PathBuf>,
    #[serde(default = "d_transcripts")]
    pub transcripts_dir: PathBuf,
    /// Where `profile` and `translate` write profile stores; defaults to
    /// `out_dir/profiles`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles_dir: Option<PathBuf>,
    #[serde(default = "d_samples")]
    pub n_samples: usize,
    #[serde(default = "d_top_p")]
    pub top_p: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub animate_filter: bool,
    #[serde(default = "d_out")]
    pub out_dir: PathBuf,
    #[serde(default = "d_parallel")]
    pub max_parallel: usize,
    /// Sampling temperature for every backend; overrides `backend.temperature`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_cache: Option<PathBuf>,
    #[serde(default = "d_oov")]
    pub oov_warning_threshold: f64,
    #[serde(default = "d_support")]
    pub min_support: usize,
    pub backend: BackendSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparison_backends: Vec<BackendSpec>,
    #[serde(default)]
    pub translator: TranslatorConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// A config with every default and the given languages and backend.
    pub fn new(languages: Vec<LanguageCode>, backend: BackendSpec) -> Self {
        ExperimentConfig {
            languages,
            lexicon_dir: None,
            transcripts_dir: d_transcripts(),
            profiles_dir: None,
            n_samples: d_samples(),
            top_p: d_top_p(),
            seed: 0,
            weighting: Weighting::default(),
            animate_filter: false,
            out_dir: d_out(),
            max_parallel: d_parallel(),
            temperature: None,
            embeddings_path: None,
            dictionary_path: None,
            translation_cache: None,
            oov_warning_threshold: d_oov(),
            min_support: d_support(),
            backend,
            comparison_backends: Vec::new(),
            translator: TranslatorConfig::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Load, apply `key=value` overrides, resolve paths, validate.
    pub fn load_with_overrides(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base, overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        let mut config: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.apply_temperature();
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn apply_temperature(&mut self) {
        if let Some(t) = self.temperature {
            self.backend.temperature = t;
            for b in &mut self.comparison_backends {
                b.temperature = t;
            }
        }
    }

    /// Make every relative path absolute with respect to `base_dir`.
    pub fn resolve_paths(&mut self, base_dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        for p in [&mut self.transcripts_dir, &mut self.out_dir] {
            fix(p);
        }
        for p in [
            &mut self.lexicon_dir,
            &mut self.profiles_dir,
            &mut self.embeddings_path,
            &mut self.dictionary_path,
            &mut self.translation_cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for b in std::iter::once(&mut self.backend).chain(&mut self.comparison_backends) {
            for p in [&mut b.transcript_path, &mut b.synthetic_plan].into_iter().flatten() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::Config("languages must list at least one language".into()));
        }
        if let Some(l) = self.languages.iter().find(|l| l.is_pivot()) {
            return Err(Error::Config(format!(
                "{l} is the pivot language, not a source language"
            )));
        }
        let mut sorted = self.languages.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.languages.len() {
            return Err(Error::Config("languages contains duplicates".into()));
        }
        if self.n_samples == 0 || self.top_p == 0 || self.max_parallel == 0 {
            return Err(Error::Config(
                "n_samples, top_p and max_parallel must be positive".into(),
            ));
        }
        if !(self.oov_warning_threshold >= 0.0 && self.oov_warning_threshold <= 1.0) {
            return Err(Error::Config("oov_warning_threshold must lie in [0, 1]".into()));
        }
        if self.translator.mode == TranslatorMode::Online && self.translator.endpoint.is_none() {
            return Err(Error::Config(
                "translator.mode = \"online\" requires translator.endpoint".into(),
            ));
        }
        for b in self.backends() {
            b.validate()?;
        }
        self.train.validate()
    }

    /// The primary backend followed by the comparison backends.
    pub fn backends(&self) -> Vec<&BackendSpec> {
        std::iter::once(&self.backend)
            .chain(&self.comparison_backends)
            .collect()
    }

    pub fn profiles_dir(&self) -> PathBuf {
        self.profiles_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("profiles"))
    }
}

/// TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut current = table;
    for part in parents {
        let slot = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = slot
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a table")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// Split `key=value`.
pub fn parse_override(raw: &str) -> Result<(String, String)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::Config(format!("override {raw:?} is not key=value")))
}
