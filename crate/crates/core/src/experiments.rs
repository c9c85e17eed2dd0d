//! The evaluation protocols.
//!
//! - same-language: split each lexicon 90/10, train and test per language;
//! - transfer: for each language, train on every other language's full data
//!   and test on the held-out language's full data;
//! - model comparison: both of the above per backend, reduced to unweighted
//!   means over languages;
//! - similarity: masculine-ratio vectors compared across language pairs.
//!
//! Languages are prepared and evaluated in parallel; every random choice is
//! seeded by hashing `(experiment, language)` with the master seed, so the
//! outputs do not depend on scheduling or on which other languages are run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{decide, forward, train_arrays, ClassifierParams, Standardizer, TrainConfig};
use crate::config::{ExperimentConfig, TranslatorMode};
use crate::describe::{aggregate, parse_completion, read_profiles, write_profiles, AdjectiveProfile};
use crate::embed::{featurize, load_embeddings, EmbeddingTable, FeatureVector};
use crate::error::{Error, Result};
use crate::gateway::{
    elicit, pending_samples, render_prompt, transcript_file, Backend, BackendKind, BackendSpec, Completion,
    PromptTemplate, ReplayBackend, TranscriptStore,
};
use crate::lexicon::{filter_animate, load_lexicon, split_lexicon, Gender, LanguageCode, Lexicon};
use crate::metrics::{
    classification_metrics, gender_ratios, similarity_matrix, write_ratios_csv, write_similarity_csv, EvalMetrics,
    GenderRatio, SimilarityMatrix,
};
use crate::seed::derive_seed;
use crate::synthetic::{SyntheticBackend, SyntheticCorpus, SyntheticPlan};
use crate::translate::{translate_profile, DictionaryTranslator, HttpTranslator, TranslationCache, Translator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SameLanguage,
    Transfer,
    ModelComparison,
    Similarity,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SameLanguage => "same_language",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::ModelComparison => "model_comparison",
            ExperimentKind::Similarity => "similarity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Trained and tested on one language.
    Same,
    /// Tested on a language left out of training.
    Unseen,
}

impl Setting {
    fn label(self) -> &'static str {
        match self {
            Setting::Same => "same",
            Setting::Unseen => "unseen",
        }
    }
}

/// Everything the classifier stages need for one language.
#[derive(Debug, Clone)]
pub struct LanguageData {
    pub language: LanguageCode,
    pub lexicon: Lexicon,
    /// Pivot-language profiles in lexicon order.
    pub profiles: Vec<AdjectiveProfile>,
    /// Features in lexicon order; empty when featurization was not requested.
    pub features: Vec<FeatureVector>,
    pub empty_samples: usize,
    pub latest_timestamp: Option<String>,
}

/// Resolved inputs for one backend: the backend itself, lexicon and
/// embedding sources, and the translator.
pub struct Pipeline<'a> {
    pub config: &'a ExperimentConfig,
    pub spec: &'a BackendSpec,
    backend: Box<dyn Backend>,
    corpus: Option<SyntheticCorpus>,
    translator: Box<dyn Translator>,
    cache: TranslationCache,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a ExperimentConfig, spec: &'a BackendSpec) -> Result<Self> {
        let mut spec_for_build = spec.clone();
        spec_for_build.max_parallel = config.max_parallel.min(spec.max_parallel);
        let (backend, corpus): (Box<dyn Backend>, _) = match spec.kind {
            BackendKind::Synthetic => {
                spec.validate()?;
                let plan = SyntheticPlan::load(spec.synthetic_plan.as_deref().expect("validated"))?;
                let corpus = SyntheticCorpus::generate(&plan, spec.seed.expect("validated"))?;
                (Box::new(SyntheticBackend::new(&corpus, &spec.model_name)), Some(corpus))
            }
            _ => (spec_for_build.build()?, None),
        };
        let translator: Box<dyn Translator> = match config.translator.mode {
            TranslatorMode::Online => Box::new(HttpTranslator::new(
                config.translator.endpoint.as_deref().expect("validated"),
                Duration::from_secs_f64(config.translator.timeout_secs),
            )),
            TranslatorMode::Dictionary => match (&config.dictionary_path, &corpus) {
                (Some(path), _) => Box::new(DictionaryTranslator::load(path, config.translator.miss_policy)?),
                (None, Some(c)) => Box::new(DictionaryTranslator::new(
                    c.dictionary.clone(),
                    config.translator.miss_policy,
                )),
                (None, None) => return Err(Error::Config("dictionary translator requires dictionary_path".into())),
            },
        };
        let cache = match &config.translation_cache {
            Some(path) => TranslationCache::open(path)?,
            None => TranslationCache::in_memory(),
        };
        Ok(Pipeline {
            config,
            spec,
            backend,
            corpus,
            translator,
            cache,
        })
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    pub fn synthetic_corpus(&self) -> Option<&SyntheticCorpus> {
        self.corpus.as_ref()
    }

    /// The configured lexicon, animate-filtered when requested.
    pub fn lexicon(&self, language: LanguageCode) -> Result<Lexicon> {
        let lexicon = match (&self.config.lexicon_dir, &self.corpus) {
            (Some(dir), _) => load_lexicon(dir.join(format!("{language}.tsv")), language)?,
            (None, Some(c)) => c
                .lexicon(language)
                .cloned()
                .ok_or_else(|| Error::Config(format!("synthetic plan has no language {language}")))?,
            (None, None) => return Err(Error::Config("lexicon_dir is not set".into())),
        };
        Ok(if self.config.animate_filter {
            filter_animate(&lexicon)
        } else {
            lexicon
        })
    }

    pub fn embeddings(&self) -> Result<EmbeddingTable> {
        match (&self.config.embeddings_path, &self.corpus) {
            (Some(path), _) => load_embeddings(path),
            (None, Some(c)) => Ok(c.embeddings.clone()),
            (None, None) => Err(Error::Config("embeddings_path is not set".into())),
        }
    }

    pub fn transcript_path(&self, language: LanguageCode) -> PathBuf {
        transcript_file(&self.config.transcripts_dir, language, &self.spec.model_name)
    }

    /// Elicit (or reuse) `n_samples` completions for every noun.
    pub fn completions(&self, lexicon: &Lexicon) -> Result<Vec<Vec<Completion>>> {
        let store = TranscriptStore::open(self.transcript_path(lexicon.language()))?;
        let template = PromptTemplate::for_language(lexicon.language());
        lexicon
            .entries()
            .iter()
            .map(|noun| {
                elicit(
                    self.backend.as_ref(),
                    &store,
                    &template,
                    noun,
                    self.config.n_samples,
                    self.config.max_parallel.min(self.spec.max_parallel),
                )
            })
            .collect()
    }

    /// Source-language profiles from already-recorded completions only.
    pub fn recorded_profiles(&self, lexicon: &Lexicon) -> Result<(Vec<AdjectiveProfile>, usize)> {
        let path = self.transcript_path(lexicon.language());
        let replay = ReplayBackend::load(&path, &self.spec.model_name)?;
        let store = TranscriptStore::open(&path)?;
        let template = PromptTemplate::for_language(lexicon.language());
        let mut profiles = Vec::with_capacity(lexicon.len());
        let mut empty = 0;
        for noun in lexicon.entries() {
            let completions = elicit(&replay, &store, &template, noun, self.config.n_samples, 1)?;
            let (profile, e) = source_profile(&completions, self.config.n_samples, self.config.top_p)?;
            profiles.push(profile);
            empty += e;
        }
        Ok((profiles, empty))
    }

    pub fn translate(&self, profiles: &[AdjectiveProfile]) -> Result<Vec<AdjectiveProfile>> {
        let mut failed = Vec::new();
        let mut out = Vec::with_capacity(profiles.len());
        for profile in profiles {
            match translate_profile(profile, &self.cache, self.translator.as_ref()) {
                Ok(p) => out.push(p),
                Err(Error::Translation { tokens, .. }) => failed.extend(tokens),
                Err(e) => return Err(e),
            }
        }
        if !failed.is_empty() {
            failed.sort();
            failed.dedup();
            return Err(Error::Translation {
                language: profiles[0].noun.language.to_string(),
                tokens: failed,
            });
        }
        Ok(out)
    }

    /// Elicit, profile, translate and optionally featurize one language.
    pub fn prepare(&self, language: LanguageCode, table: Option<&EmbeddingTable>) -> Result<LanguageData> {
        let lexicon = self.lexicon(language)?;
        if lexicon.is_empty() {
            return Err(Error::Validation(format!(
                "{language}: lexicon is empty after filtering"
            )));
        }
        let completions = self.completions(&lexicon)?;
        let latest_timestamp = completions.iter().flatten().map(|c| c.timestamp.clone()).max();
        let mut source = Vec::with_capacity(lexicon.len());
        let mut empty_samples = 0;
        for noun_completions in &completions {
            let (profile, empty) = source_profile(noun_completions, self.config.n_samples, self.config.top_p)?;
            source.push(profile);
            empty_samples += empty;
        }
        let profiles = self.translate(&source)?;
        let features = match table {
            Some(t) => profiles
                .iter()
                .map(|p| featurize(p, t, self.config.weighting))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(LanguageData {
            language,
            lexicon,
            profiles,
            features,
            empty_samples,
            latest_timestamp,
        })
    }

    /// Prepare every configured language; failures from all languages are
    /// gathered before anything is trained.
    pub fn prepare_all(&self, with_features: bool) -> Result<Vec<LanguageData>> {
        let table = if with_features { Some(self.embeddings()?) } else { None };
        let results: Vec<(LanguageCode, Result<LanguageData>)> = self
            .config
            .languages
            .par_iter()
            .map(|&l| (l, self.prepare(l, table.as_ref())))
            .collect();
        let mut data = Vec::new();
        let mut problems = Vec::new();
        for (language, result) in results {
            match result {
                Ok(d) => data.push(d),
                Err(e) => problems.push((language, e)),
            }
        }
        match problems.len() {
            0 => Ok(data),
            // keep the error class (transport, replay miss, ...) when only one language failed
            1 => Err(problems.pop().expect("one").1),
            _ => Err(Error::Validation(
                problems
                    .iter()
                    .map(|(l, e)| format!("{l}: {e}"))
                    .collect::<Vec<_>>()
                    .join("; "),
            )),
        }
    }
}

fn source_profile(completions: &[Completion], n_samples: usize, top_p: usize) -> Result<(AdjectiveProfile, usize)> {
    let sets: Vec<_> = completions.iter().map(parse_completion).collect();
    let empty = sets.iter().filter(|s| s.is_empty()).count();
    Ok((aggregate(&sets, n_samples, top_p)?, empty))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRow {
    pub language: LanguageCode,
    pub setting: Setting,
    pub backend: String,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub metrics: EvalMetrics,
    pub final_loss: Option<f64>,
    pub mean_oov_ratio: f64,
    pub nouns_over_oov_threshold: usize,
    pub empty_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub setting: Setting,
    pub backend: String,
    pub n_languages: usize,
    pub f1_feminine: f64,
    pub f1_macro: f64,
    pub overall_accuracy: f64,
    pub masculine_accuracy: f64,
    pub feminine_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ExperimentKind,
    pub backend: String,
    pub seed: u64,
    /// Latest timestamp among the transcripts the report was computed from.
    pub data_timestamp: Option<String>,
    pub config: ExperimentConfig,
    pub rows: Vec<LanguageRow>,
    pub means: Vec<MeanRow>,
    pub similarity: Option<SimilarityMatrix>,
    pub ratios: BTreeMap<LanguageCode, Vec<GenderRatio>>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    fn new(kind: ExperimentKind, config: &ExperimentConfig, backends: &[&BackendSpec]) -> Self {
        EvalReport {
            kind,
            backend: backends.iter().map(|b| b.summary()).collect::<Vec<_>>().join("+"),
            seed: config.seed,
            data_timestamp: None,
            config: config.clone(),
            rows: Vec::new(),
            means: Vec::new(),
            similarity: None,
            ratios: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn absorb_timestamps(&mut self, data: &[LanguageData]) {
        let latest = data.iter().filter_map(|d| d.latest_timestamp.clone()).max();
        self.data_timestamp = self.data_timestamp.clone().max(latest);
    }

    pub fn row(&self, language: LanguageCode, setting: Setting) -> Option<&LanguageRow> {
        self.rows
            .iter()
            .find(|r| r.language == language && r.setting == setting)
    }

    /// File stem `{kind}__{backend}__seed{seed}`.
    pub fn stem(&self) -> String {
        let backend: String = self
            .backend
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_' | '+') {
                    c
                } else {
                    '-'
                }
            })
            .collect();
        format!("{}__{}__seed{}", self.kind.as_str(), backend, self.seed)
    }
}

fn features_of(data: &[&LanguageData]) -> Vec<FeatureVector> {
    data.iter().flat_map(|d| d.features.iter().cloned()).collect()
}

/// Standardize on the training rows, train, and score the test rows.
fn fit_and_score(
    train: &[FeatureVector],
    test: &[FeatureVector],
    config: &TrainConfig,
) -> Result<(ClassifierParams, EvalMetrics, Option<f64>)> {
    let scaler = Standardizer::fit_features(train)?;
    let inputs: Vec<Vec<f64>> = train.iter().map(|f| scaler.transform(&f.values)).collect();
    let labels: Vec<Gender> = train.iter().map(|f| f.noun.gender).collect();
    let model = train_arrays(&inputs, &labels, config)?;
    let predicted = test
        .iter()
        .map(|f| forward(&model.params, &scaler.transform(&f.values)).map(decide))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<Gender> = test.iter().map(|f| f.noun.gender).collect();
    let metrics = classification_metrics(&predicted, &truths)?;
    Ok((model.params, metrics, model.loss_curve.last().copied()))
}

fn oov_summary(features: &[FeatureVector], threshold: f64) -> (f64, usize) {
    if features.is_empty() {
        return (0.0, 0);
    }
    let mean = features.iter().map(FeatureVector::oov_ratio).sum::<f64>() / features.len() as f64;
    let over = features.iter().filter(|f| f.oov_ratio() > threshold).count();
    (mean, over)
}

fn oov_warnings(rows: &[LanguageRow], threshold: f64) -> Vec<String> {
    rows.iter()
        .filter(|r| r.nouns_over_oov_threshold > 0)
        .map(|r| {
            format!(
                "{} ({}, {}): {} nouns have more than {:.0}% out-of-vocabulary adjectives",
                r.language,
                r.setting.label(),
                r.backend,
                r.nouns_over_oov_threshold,
                threshold * 100.0
            )
        })
        .collect()
}

fn same_language_rows(config: &ExperimentConfig, backend: &str, data: &[LanguageData]) -> Result<Vec<LanguageRow>> {
    data.par_iter()
        .map(|d| {
            let lang = d.language.as_str();
            let seed = derive_seed(config.seed, &["same_language", lang]);
            let split = split_lexicon(&d.lexicon, seed)?;
            let by_surface: BTreeMap<&str, &FeatureVector> =
                d.features.iter().map(|f| (f.noun.surface.as_str(), f)).collect();
            let pick = |nouns: &[crate::lexicon::Noun]| -> Vec<FeatureVector> {
                nouns.iter().map(|n| by_surface[n.surface.as_str()].clone()).collect()
            };
            let (train, test) = (pick(&split.train), pick(&split.test));
            let train_config = TrainConfig { seed, ..config.train };
            let (_, metrics, final_loss) =
                fit_and_score(&train, &test, &train_config).map_err(|e| Error::Validation(format!("{lang}: {e}")))?;
            let (mean_oov_ratio, over) = oov_summary(&d.features, config.oov_warning_threshold);
            Ok(LanguageRow {
                language: d.language,
                setting: Setting::Same,
                backend: backend.to_string(),
                n_train: train.len(),
                n_test: test.len(),
                seed,
                metrics,
                final_loss,
                mean_oov_ratio,
                nouns_over_oov_threshold: over,
                empty_samples: d.empty_samples,
            })
        })
        .collect()
}

/// Parameters of the transfer classifier for `held_out`, trained only on the
/// other languages' features.
pub fn train_transfer_model(
    config: &ExperimentConfig,
    data: &[LanguageData],
    held_out: LanguageCode,
) -> Result<(ClassifierParams, Standardizer)> {
    let others: Vec<&LanguageData> = data.iter().filter(|d| d.language != held_out).collect();
    let train = features_of(&others);
    let scaler = Standardizer::fit_features(&train)?;
    let inputs: Vec<Vec<f64>> = train.iter().map(|f| scaler.transform(&f.values)).collect();
    let labels: Vec<Gender> = train.iter().map(|f| f.noun.gender).collect();
    let seed = derive_seed(config.seed, &["transfer", held_out.as_str()]);
    let model = train_arrays(&inputs, &labels, &TrainConfig { seed, ..config.train })?;
    Ok((model.params, scaler))
}

fn transfer_rows(config: &ExperimentConfig, backend: &str, data: &[LanguageData]) -> Result<Vec<LanguageRow>> {
    if data.len() < 2 {
        return Err(Error::Config("transfer needs at least two languages".into()));
    }
    data.par_iter()
        .map(|held| {
            let lang = held.language.as_str();
            let seed = derive_seed(config.seed, &["transfer", lang]);
            let others: Vec<&LanguageData> = data.iter().filter(|d| d.language != held.language).collect();
            let train = features_of(&others);
            let train_config = TrainConfig { seed, ..config.train };
            let (_, metrics, final_loss) = fit_and_score(&train, &held.features, &train_config)
                .map_err(|e| Error::Validation(format!("held-out {lang}: {e}")))?;
            let (mean_oov_ratio, over) = oov_summary(&held.features, config.oov_warning_threshold);
            Ok(LanguageRow {
                language: held.language,
                setting: Setting::Unseen,
                backend: backend.to_string(),
                n_train: train.len(),
                n_test: held.features.len(),
                seed,
                metrics,
                final_loss,
                mean_oov_ratio,
                nouns_over_oov_threshold: over,
                empty_samples: held.empty_samples,
            })
        })
        .collect()
}

fn mean_row(setting: Setting, backend: &str, rows: &[&LanguageRow]) -> MeanRow {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&EvalMetrics) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    MeanRow {
        setting,
        backend: backend.to_string(),
        n_languages: rows.len(),
        f1_feminine: mean(|m| m.f1_feminine),
        f1_macro: mean(|m| m.f1_macro),
        overall_accuracy: mean(|m| m.overall_accuracy),
        masculine_accuracy: mean(|m| m.masculine_accuracy),
        feminine_accuracy: mean(|m| m.feminine_accuracy),
    }
}

pub fn run_same_language(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let pipeline = Pipeline::new(config, &config.backend)?;
    let data = pipeline.prepare_all(true)?;
    let mut report = EvalReport::new(ExperimentKind::SameLanguage, config, &[&config.backend]);
    report.absorb_timestamps(&data);
    report.rows = same_language_rows(config, &config.backend.summary(), &data)?;
    report.warnings = oov_warnings(&report.rows, config.oov_warning_threshold);
    Ok(report)
}

pub fn run_transfer(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    if config.languages.len() < 2 {
        return Err(Error::Config("transfer needs at least two languages".into()));
    }
    let pipeline = Pipeline::new(config, &config.backend)?;
    let data = pipeline.prepare_all(true)?;
    let mut report = EvalReport::new(ExperimentKind::Transfer, config, &[&config.backend]);
    report.absorb_timestamps(&data);
    report.rows = transfer_rows(config, &config.backend.summary(), &data)?;
    report.warnings = oov_warnings(&report.rows, config.oov_warning_threshold);
    Ok(report)
}

/// Same-language and transfer suites for every backend, then unweighted
/// means over languages ordered Same per backend, then Unseen per backend.
pub fn run_model_comparison(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let backends = config.backends();
    if backends.len() < 2 {
        return Err(Error::Config(
            "model comparison needs backend plus at least one comparison_backends entry".into(),
        ));
    }
    if config.languages.len() < 2 {
        return Err(Error::Config(
            "model comparison runs transfer and needs at least two languages".into(),
        ));
    }
    let mut report = EvalReport::new(ExperimentKind::ModelComparison, config, &backends);
    let mut same = Vec::new();
    let mut unseen = Vec::new();
    for (i, spec) in backends.iter().enumerate() {
        let pipeline = Pipeline::new(config, spec)?;
        let data = pipeline.prepare_all(true)?;
        report.absorb_timestamps(&data);
        // distinguishes a backend listed twice
        let label = format!("{}#{}", spec.summary(), i + 1);
        same.push((label.clone(), same_language_rows(config, &label, &data)?));
        unseen.push((label, transfer_rows(config, &spec.summary(), &data)?));
    }
    for (setting, groups) in [(Setting::Same, &same), (Setting::Unseen, &unseen)] {
        for (label, rows) in groups.iter() {
            let refs: Vec<&LanguageRow> = rows.iter().collect();
            report.means.push(mean_row(setting, label, &refs));
        }
    }
    for (label, rows) in same.into_iter().chain(unseen) {
        report.rows.extend(rows.into_iter().map(|r| LanguageRow {
            backend: label.clone(),
            ..r
        }));
    }
    report.warnings = oov_warnings(&report.rows, config.oov_warning_threshold);
    Ok(report)
}

pub fn run_similarity(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let pipeline = Pipeline::new(config, &config.backend)?;
    let data = pipeline.prepare_all(false)?;
    let mut report = EvalReport::new(ExperimentKind::Similarity, config, &[&config.backend]);
    report.absorb_timestamps(&data);
    let ratios: Vec<(LanguageCode, BTreeMap<String, GenderRatio>)> =
        data.iter().map(|d| (d.language, gender_ratios(&d.profiles))).collect();
    let matrix = similarity_matrix(&ratios, config.min_support);
    for (i, p) in matrix.languages.iter().enumerate() {
        for (j, q) in matrix.languages.iter().enumerate().skip(i + 1) {
            let cell = &matrix.cells[i][j];
            if cell.score.is_none() {
                report.warnings.push(format!(
                    "{p}/{q}: {:?} over {} shared adjectives",
                    cell.status, cell.shared_count
                ));
            }
        }
    }
    report.similarity = Some(matrix);
    report.ratios = ratios
        .into_iter()
        .map(|(l, r)| (l, r.into_values().collect()))
        .collect();
    Ok(report)
}

pub fn run(kind: ExperimentKind, config: &ExperimentConfig) -> Result<EvalReport> {
    match kind {
        ExperimentKind::SameLanguage => run_same_language(config),
        ExperimentKind::Transfer => run_transfer(config),
        ExperimentKind::ModelComparison => run_model_comparison(config),
        ExperimentKind::Similarity => run_similarity(config),
    }
}

/// Write `{stem}.json`, the companion CSVs and a `{stem}.config.toml`
/// snapshot that reruns the experiment. Returns the JSON path.
pub fn write_report(report: &EvalReport, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let json_path = out_dir.join(format!("{}.json", report.stem()));
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    let snapshot = out_dir.join(format!("{}.config.toml", report.stem()));
    fs::write(&snapshot, report.config.to_toml()?).map_err(|e| Error::io(&snapshot, e))?;
    render_csvs(report, out_dir)?;
    Ok(json_path)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// (Re)write the CSV tables of a report. Returns the paths written.
pub fn render_csvs(report: &EvalReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let stem = report.stem();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    if !report.rows.is_empty() {
        let path = out_dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| crate::metrics::csv_error(&path, e))?;
        let header = [
            "language",
            "setting",
            "backend",
            "f1",
            "overall",
            "masculine",
            "feminine",
            "f1_macro",
            "f1_masculine",
            "n_train",
            "n_test",
            "seed",
        ];
        w.write_record(header)
            .map_err(|e| crate::metrics::csv_error(&path, e))?;
        for r in &report.rows {
            let m = &r.metrics;
            w.write_record([
                r.language.to_string(),
                r.setting.label().to_string(),
                r.backend.clone(),
                m.f1_feminine.to_string(),
                m.overall_accuracy.to_string(),
                m.masculine_accuracy.to_string(),
                m.feminine_accuracy.to_string(),
                m.f1_macro.to_string(),
                m.f1_masculine.to_string(),
                r.n_train.to_string(),
                r.n_test.to_string(),
                r.seed.to_string(),
            ])
            .map_err(|e| crate::metrics::csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    if !report.means.is_empty() {
        let path = out_dir.join(format!("{stem}.means.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| crate::metrics::csv_error(&path, e))?;
        w.write_record([
            "setting",
            "backend",
            "f1",
            "overall",
            "masculine",
            "feminine",
            "f1_macro",
            "n_languages",
        ])
        .map_err(|e| crate::metrics::csv_error(&path, e))?;
        for m in &report.means {
            w.write_record([
                m.setting.label().to_string(),
                m.backend.clone(),
                m.f1_feminine.to_string(),
                m.overall_accuracy.to_string(),
                m.masculine_accuracy.to_string(),
                m.feminine_accuracy.to_string(),
                m.f1_macro.to_string(),
                m.n_languages.to_string(),
            ])
            .map_err(|e| crate::metrics::csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    if let Some(matrix) = &report.similarity {
        let path = out_dir.join(format!("{stem}.similarity.csv"));
        write_similarity_csv(&path, matrix)?;
        written.push(path);
    }
    for (language, ratios) in &report.ratios {
        let path = out_dir.join(format!("{stem}.ratios.{language}.csv"));
        write_ratios_csv(&path, ratios)?;
        written.push(path);
    }
    Ok(written)
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// Plain-text table: one row per language (or per mean row for comparisons).
pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} ({}, seed {})",
        report.kind.as_str(),
        report.backend,
        report.seed
    );
    if let Some(matrix) = &report.similarity {
        let _ = write!(out, "{:>4}", "");
        for l in &matrix.languages {
            let _ = write!(out, "{:>7}", l.as_str());
        }
        out.push('\n');
        for (i, p) in matrix.languages.iter().enumerate() {
            let _ = write!(out, "{:>4}", p.as_str());
            for cell in &matrix.cells[i] {
                let shown = cell.score.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
                let _ = write!(out, "{shown:>7}");
            }
            out.push('\n');
        }
    }
    if !report.means.is_empty() {
        let _ = writeln!(
            out,
            "{:<8} {:<28} {:>5} {:>8} {:>8} {:>8}",
            "setting", "backend", "F1", "overall", "masc", "fem"
        );
        for m in &report.means {
            let _ = writeln!(
                out,
                "{:<8} {:<28} {:>5.2} {:>8} {:>8} {:>8}",
                m.setting.label(),
                m.backend,
                m.f1_feminine,
                pct(m.overall_accuracy),
                pct(m.masculine_accuracy),
                pct(m.feminine_accuracy)
            );
        }
    } else if !report.rows.is_empty() {
        let _ = writeln!(
            out,
            "{:<4} {:>5} {:>8} {:>8} {:>8} {:>6}",
            "lang", "F1", "overall", "masc", "fem", "n_test"
        );
        for r in &report.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:<4} {:>5.2} {:>8} {:>8} {:>8} {:>6}",
                r.language.as_str(),
                m.f1_feminine,
                pct(m.overall_accuracy),
                pct(m.masculine_accuracy),
                pct(m.feminine_accuracy),
                r.n_test
            );
        }
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Planned work for `elicit`: one entry per language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ElicitPlan {
    pub language: LanguageCode,
    pub nouns: usize,
    pub stored: usize,
    pub pending: usize,
}

/// Count stored and missing samples without contacting the backend.
pub fn plan_elicitation(config: &ExperimentConfig, pipeline: &Pipeline<'_>) -> Result<(Vec<ElicitPlan>, Vec<String>)> {
    let mut plans = Vec::new();
    let mut prompts = Vec::new();
    for &language in &config.languages {
        let lexicon = pipeline.lexicon(language)?;
        let store = TranscriptStore::open(pipeline.transcript_path(language))?;
        let template = PromptTemplate::for_language(language);
        let mut pending = 0;
        for noun in lexicon.entries() {
            let prompt = render_prompt(&template, noun)?;
            let missing = pending_samples(&store, &pipeline.spec.model_name, &prompt, config.n_samples).len();
            if missing > 0 {
                prompts.push(prompt);
            }
            pending += missing;
        }
        plans.push(ElicitPlan {
            language,
            nouns: lexicon.len(),
            stored: lexicon.len() * config.n_samples - pending,
            pending,
        });
    }
    Ok((plans, prompts))
}

/// Run the `profile` stage: source profiles from recorded transcripts.
pub fn stage_profiles(pipeline: &Pipeline<'_>, language: LanguageCode) -> Result<PathBuf> {
    let lexicon = pipeline.lexicon(language)?;
    let (profiles, empty) = pipeline.recorded_profiles(&lexicon)?;
    if empty > 0 {
        log::warn!("{language}: {empty} samples parsed to no adjectives");
    }
    let path = profile_path(pipeline, language, "source");
    write_profiles(&path, &profiles)?;
    Ok(path)
}

/// Run the `translate` stage: translate stored source profiles, filling the
/// cache, and store the pivot profiles.
pub fn stage_translate(pipeline: &Pipeline<'_>, language: LanguageCode) -> Result<PathBuf> {
    let lexicon = pipeline.lexicon(language)?;
    let source_path = profile_path(pipeline, language, "source");
    let source = read_profiles(&source_path, &lexicon, language, pipeline.config.top_p)?;
    let pivot = pipeline.translate(&source)?;
    let path = profile_path(pipeline, language, "pivot");
    write_profiles(&path, &pivot)?;
    Ok(path)
}

pub fn profile_path(pipeline: &Pipeline<'_>, language: LanguageCode, stage: &str) -> PathBuf {
    let file = transcript_file(Path::new(""), language, &pipeline.spec.model_name);
    let stem = file
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("profiles")
        .to_string();
    pipeline.config.profiles_dir().join(format!("{stem}.{stage}.jsonl"))
}
