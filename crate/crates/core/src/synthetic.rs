//! Synthetic languages with a planted gender/adjective association.
//!
//! Every semantic group owns three pools of pivot adjectives (masculine,
//! feminine, neutral) and a private block of embedding axes. Masculine pivots
//! sit at `+separation` on the block's first axis, feminine ones at
//! `-separation`, neutral ones at zero; the remaining axes are noise. A
//! language draws its answers from one group through its own surface forms
//! (optionally with synonyms and gender inflection), so languages that share a
//! group line up after translation and languages in different groups do not.
//!
//! Each answer slot comes from the noun's gendered pool with probability
//! `bias_strength`, otherwise from the neutral pool, without repetition inside
//! one answer.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::gateway::{
    prompt_hash, render_prompt, transcript_file, write_records, Backend, BackendReply, CompletionRequest,
    PromptTemplate, TranscriptRecord, FIXED_TIMESTAMP,
};
use crate::lexicon::{Gender, LanguageCode, Lexicon, Noun};
use crate::seed;
use crate::translate::{write_dictionary, TranslationEntry};

fn d_n_nouns() -> usize {
    60
}
fn d_half() -> f64 {
    0.5
}
fn d_one() -> f64 {
    1.0
}
fn d_m() -> usize {
    5
}
fn d_group() -> String {
    "shared".into()
}
fn d_synonyms() -> usize {
    1
}
fn d_model() -> String {
    "synthetic".into()
}
fn d_samples() -> usize {
    10
}
fn d_pool() -> usize {
    20
}
fn d_dim() -> usize {
    4
}
fn d_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguagePlan {
    pub code: LanguageCode,
    #[serde(default = "d_n_nouns")]
    pub n_nouns: usize,
    #[serde(default = "d_half")]
    pub masculine_fraction: f64,
    #[serde(default = "d_one")]
    pub bias_strength: f64,
    #[serde(default = "d_m")]
    pub adjectives_per_response: usize,
    #[serde(default = "d_group")]
    pub semantic_group: String,
    /// Surface adjectives agree with the noun (`-o` / `-a`), so two surface
    /// forms translate to one pivot.
    #[serde(default)]
    pub inflect: bool,
    #[serde(default = "d_synonyms")]
    pub synonyms: usize,
    #[serde(default)]
    pub animate_fraction: f64,
    /// Masculine nouns draw from the feminine pool and vice versa.
    #[serde(default)]
    pub swap_gender_pools: bool,
}

impl LanguagePlan {
    pub fn new(code: LanguageCode) -> Self {
        LanguagePlan {
            code,
            n_nouns: d_n_nouns(),
            masculine_fraction: d_half(),
            bias_strength: d_one(),
            adjectives_per_response: d_m(),
            semantic_group: d_group(),
            inflect: false,
            synonyms: d_synonyms(),
            animate_fraction: 0.0,
            swap_gender_pools: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPlan {
    #[serde(default = "d_model")]
    pub model: String,
    #[serde(default = "d_samples")]
    pub samples_per_noun: usize,
    /// Pivot adjectives per pool (masculine, feminine, neutral) per group.
    #[serde(default = "d_pool")]
    pub pool_size: usize,
    /// Embedding axes per semantic group.
    #[serde(default = "d_dim")]
    pub group_dimension: usize,
    #[serde(default = "d_one")]
    pub separation: f64,
    #[serde(default = "d_noise")]
    pub noise: f64,
    /// Neutral pivots per group left out of the embedding table.
    #[serde(default)]
    pub oov_neutral: usize,
    pub languages: Vec<LanguagePlan>,
}

impl SyntheticPlan {
    pub fn new(languages: Vec<LanguagePlan>) -> Self {
        SyntheticPlan {
            model: d_model(),
            samples_per_noun: d_samples(),
            pool_size: d_pool(),
            group_dimension: d_dim(),
            separation: d_one(),
            noise: d_noise(),
            oov_neutral: 0,
            languages,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: SyntheticPlan =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Semantic groups in sorted order; a group's index fixes its block.
    pub fn groups(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.languages.iter().map(|l| l.semantic_group.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("synthetic plan: {msg}")));
        if self.languages.is_empty() {
            return bad("no languages".into());
        }
        if self.samples_per_noun == 0 || self.pool_size == 0 || self.group_dimension == 0 {
            return bad("samples_per_noun, pool_size and group_dimension must be positive".into());
        }
        if !(self.separation.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            return bad("separation and noise must be finite, noise >= 0".into());
        }
        if self.oov_neutral >= self.pool_size {
            return bad("oov_neutral must be smaller than pool_size".into());
        }
        let mut seen = BTreeSet::new();
        for l in &self.languages {
            if l.code.is_pivot() || !seen.insert(l.code) {
                return bad(format!("language {} is the pivot or listed twice", l.code));
            }
            if l.n_nouns == 0 {
                return bad(format!("{}: n_nouns must be positive", l.code));
            }
            if !(l.masculine_fraction > 0.0 && l.masculine_fraction < 1.0) {
                return bad(format!("{}: masculine_fraction must lie in (0, 1)", l.code));
            }
            if !(0.0..=1.0).contains(&l.bias_strength) || !(0.0..=1.0).contains(&l.animate_fraction) {
                return bad(format!(
                    "{}: bias_strength and animate_fraction must lie in [0, 1]",
                    l.code
                ));
            }
            if l.adjectives_per_response == 0 {
                return bad(format!("{}: adjectives_per_response must be positive", l.code));
            }
            if l.adjectives_per_response > self.pool_size {
                return bad(format!(
                    "{}: {} adjectives per response would exhaust pools of {}",
                    l.code, l.adjectives_per_response, self.pool_size
                ));
            }
            if !(1..=26).contains(&l.synonyms) {
                return bad(format!("{}: synonyms must be between 1 and 26", l.code));
            }
            let group_ok = !l.semantic_group.is_empty()
                && l.semantic_group
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
            if !group_ok {
                return bad(format!(
                    "{}: semantic_group must be lowercase ASCII letters or digits",
                    l.code
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PoolKind {
    Masculine,
    Feminine,
    Neutral,
}

impl PoolKind {
    fn tag(self) -> char {
        match self {
            PoolKind::Masculine => 'm',
            PoolKind::Feminine => 'f',
            PoolKind::Neutral => 'n',
        }
    }

    fn polarity(self) -> f64 {
        match self {
            PoolKind::Masculine => 1.0,
            PoolKind::Feminine => -1.0,
            PoolKind::Neutral => 0.0,
        }
    }
}

fn pool(group: &str, kind: PoolKind, size: usize) -> Vec<String> {
    (0..size).map(|i| format!("{group}_{}{i:03}", kind.tag())).collect()
}

/// The shared semantic map: one vector per pivot adjective of every group,
/// minus the neutral pivots held out as out-of-vocabulary.
pub fn semantic_map(plan: &SyntheticPlan, seed_value: u64) -> Result<EmbeddingTable> {
    let groups = plan.groups();
    let block = plan.group_dimension;
    let mut table = EmbeddingTable::new(block * groups.len());
    for (g, group) in groups.iter().enumerate() {
        for kind in [PoolKind::Masculine, PoolKind::Feminine, PoolKind::Neutral] {
            let tokens = pool(group, kind, plan.pool_size);
            let kept = if kind == PoolKind::Neutral {
                plan.pool_size - plan.oov_neutral
            } else {
                plan.pool_size
            };
            for token in &tokens[..kept] {
                let mut rng = seed::rng(seed::derive_seed(seed_value, &["embedding", token]));
                let mut vector = vec![0.0f32; table.dimension()];
                for axis in 0..block {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let value = if axis == 0 {
                        kind.polarity() * plan.separation + plan.noise * z
                    } else {
                        z
                    };
                    vector[g * block + axis] = value as f32;
                }
                table.insert(token, &vector)?;
            }
        }
    }
    Ok(table)
}

/// One synthetic language, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub language: LanguageCode,
    pub model: String,
    pub samples_per_noun: usize,
    pub n_nouns: usize,
    pub masculine_fraction: f64,
    pub animate_fraction: f64,
    pub bias_strength: f64,
    pub adjectives_per_response: usize,
    /// Pivot pool drawn for masculine nouns.
    pub vocab_masculine: Vec<String>,
    /// Pivot pool drawn for feminine nouns.
    pub vocab_feminine: Vec<String>,
    pub vocab_neutral: Vec<String>,
    pub synonyms: usize,
    pub inflect: bool,
    pub shared_semantic_map: EmbeddingTable,
}

impl SyntheticSpec {
    pub fn resolve(plan: &SyntheticPlan, language: LanguageCode, table: &EmbeddingTable) -> Result<Self> {
        let l = plan
            .languages
            .iter()
            .find(|l| l.code == language)
            .ok_or_else(|| Error::Config(format!("synthetic plan has no language {language}")))?;
        let group = &l.semantic_group;
        let (mut masc, mut fem) = (
            pool(group, PoolKind::Masculine, plan.pool_size),
            pool(group, PoolKind::Feminine, plan.pool_size),
        );
        if l.swap_gender_pools {
            std::mem::swap(&mut masc, &mut fem);
        }
        Ok(SyntheticSpec {
            language,
            model: plan.model.clone(),
            samples_per_noun: plan.samples_per_noun,
            n_nouns: l.n_nouns,
            masculine_fraction: l.masculine_fraction,
            animate_fraction: l.animate_fraction,
            bias_strength: l.bias_strength,
            adjectives_per_response: l.adjectives_per_response,
            vocab_masculine: masc,
            vocab_feminine: fem,
            vocab_neutral: pool(group, PoolKind::Neutral, plan.pool_size),
            synonyms: l.synonyms,
            inflect: l.inflect,
            shared_semantic_map: table.clone(),
        })
    }

    fn gendered_pool(&self, gender: Gender) -> &[String] {
        match gender {
            Gender::Masculine => &self.vocab_masculine,
            Gender::Feminine => &self.vocab_feminine,
        }
    }

    /// Surface form of `pivot` for synonym `synonym` and agreement `gender`.
    pub fn surface(&self, pivot: &str, synonym: usize, gender: Gender) -> String {
        let letter = char::from(b'a' + synonym as u8);
        let ending = match (self.inflect, gender) {
            (false, _) => "",
            (true, Gender::Masculine) => "o",
            (true, Gender::Feminine) => "a",
        };
        format!("{}_{pivot}{letter}{ending}", self.language)
    }

    /// Pivot adjectives of one answer.
    pub fn sample_pivots(&self, gender: Gender, rng: &mut impl Rng) -> Vec<String> {
        let mut gendered: Vec<&String> = self.gendered_pool(gender).iter().collect();
        let mut neutral: Vec<&String> = self.vocab_neutral.iter().collect();
        let mut out = Vec::with_capacity(self.adjectives_per_response);
        for _ in 0..self.adjectives_per_response {
            let from_gendered = rng.random_bool(self.bias_strength);
            let source = if from_gendered { &mut gendered } else { &mut neutral };
            let pick = rng.random_range(0..source.len());
            out.push(source.swap_remove(pick).clone());
        }
        out
    }

    /// The answer text for one prompting, a pure function of the inputs.
    pub fn respond(&self, gender: Gender, prompt_hash: &str, sample_index: usize, seed_value: u64) -> String {
        let index = sample_index.to_string();
        let mut rng = seed::rng(seed::derive_seed(seed_value, &["response", prompt_hash, &index]));
        let pivots = self.sample_pivots(gender, &mut rng);
        pivots
            .iter()
            .map(|p| {
                let synonym = rng.random_range(0..self.synonyms);
                self.surface(p, synonym, gender)
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn lexicon(&self, seed_value: u64) -> Result<Lexicon> {
        let lang = self.language.as_str();
        let n = self.n_nouns;
        let n_masc = ((n as f64) * self.masculine_fraction).round() as usize;
        let n_animate = ((n as f64) * self.animate_fraction).round() as usize;
        let mut gender_order: Vec<usize> = (0..n).collect();
        gender_order.shuffle(&mut seed::rng(seed::derive_seed(seed_value, &["genders", lang])));
        let mut animate_order: Vec<usize> = (0..n).collect();
        animate_order.shuffle(&mut seed::rng(seed::derive_seed(seed_value, &["animacy", lang])));
        let mut genders = vec![Gender::Feminine; n];
        for &i in &gender_order[..n_masc] {
            genders[i] = Gender::Masculine;
        }
        let mut animate = vec![false; n];
        for &i in &animate_order[..n_animate] {
            animate[i] = true;
        }
        let entries = (0..n)
            .map(|k| {
                Noun::new(
                    format!("{lang}_noun{k:04}"),
                    self.language,
                    genders[k],
                    format!("noun{k:04}"),
                    animate[k],
                )
            })
            .collect();
        Lexicon::new(self.language, entries)
    }

    /// Every surface form this language can emit, mapped to its pivot.
    pub fn dictionary(&self) -> Vec<TranslationEntry> {
        let genders: &[Gender] = if self.inflect {
            &[Gender::Masculine, Gender::Feminine]
        } else {
            &[Gender::Masculine]
        };
        let mut pivots: Vec<&String> = self
            .vocab_masculine
            .iter()
            .chain(&self.vocab_feminine)
            .chain(&self.vocab_neutral)
            .collect();
        pivots.sort();
        let mut out = Vec::new();
        for pivot in pivots {
            for synonym in 0..self.synonyms {
                for &g in genders {
                    out.push(TranslationEntry {
                        source: self.surface(pivot, synonym, g),
                        source_language: self.language,
                        target: pivot.clone(),
                    });
                }
            }
        }
        out
    }
}

/// Lexicon, transcript records and embedding table for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageFixture {
    pub lexicon: Lexicon,
    pub transcripts: Vec<TranscriptRecord>,
    pub embeddings: EmbeddingTable,
}

pub fn transcripts_for(spec: &SyntheticSpec, lexicon: &Lexicon, seed_value: u64) -> Result<Vec<TranscriptRecord>> {
    let template = PromptTemplate::for_language(spec.language);
    let mut records = Vec::with_capacity(lexicon.len() * spec.samples_per_noun);
    for noun in lexicon.entries() {
        let hash = prompt_hash(&render_prompt(&template, noun)?);
        for sample_index in 0..spec.samples_per_noun {
            records.push(TranscriptRecord {
                prompt_hash: hash.clone(),
                noun: noun.surface.clone(),
                sample_index,
                raw_text: spec.respond(noun.gender, &hash, sample_index, seed_value),
                model: spec.model.clone(),
                timestamp: FIXED_TIMESTAMP.to_string(),
            });
        }
    }
    Ok(records)
}

pub fn generate_language(spec: &SyntheticSpec, seed_value: u64) -> Result<LanguageFixture> {
    let lexicon = spec.lexicon(seed_value)?;
    let transcripts = transcripts_for(spec, &lexicon, seed_value)?;
    Ok(LanguageFixture {
        lexicon,
        transcripts,
        embeddings: spec.shared_semantic_map.clone(),
    })
}

/// Everything a plan defines except the transcripts, which are produced on
/// demand by [`SyntheticBackend`] or [`SyntheticCorpus::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub plan: SyntheticPlan,
    pub seed: u64,
    pub specs: Vec<SyntheticSpec>,
    pub lexicons: Vec<Lexicon>,
    pub embeddings: EmbeddingTable,
    pub dictionary: Vec<TranslationEntry>,
}

impl SyntheticCorpus {
    pub fn generate(plan: &SyntheticPlan, seed_value: u64) -> Result<Self> {
        plan.validate()?;
        let embeddings = semantic_map(plan, seed_value)?;
        let mut specs = Vec::new();
        let mut lexicons = Vec::new();
        let mut dictionary = Vec::new();
        for l in &plan.languages {
            let spec = SyntheticSpec::resolve(plan, l.code, &embeddings)?;
            lexicons.push(spec.lexicon(seed_value)?);
            dictionary.extend(spec.dictionary());
            specs.push(spec);
        }
        Ok(SyntheticCorpus {
            plan: plan.clone(),
            seed: seed_value,
            specs,
            lexicons,
            embeddings,
            dictionary,
        })
    }

    pub fn spec(&self, language: LanguageCode) -> Option<&SyntheticSpec> {
        self.specs.iter().find(|s| s.language == language)
    }

    pub fn lexicon(&self, language: LanguageCode) -> Option<&Lexicon> {
        self.lexicons.iter().find(|l| l.language() == language)
    }

    /// Write the fixture tree:
    ///
    /// ```text
    /// plan.toml
    /// lexicons/{lang}.tsv
    /// transcripts/{lang}__{model}.jsonl
    /// embeddings.txt
    /// dictionary.tsv
    /// ```
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let plan_path = dir.join("plan.toml");
        fs::write(&plan_path, self.plan.to_toml()?).map_err(|e| Error::io(&plan_path, e))?;
        written.push(plan_path);
        for (spec, lexicon) in self.specs.iter().zip(&self.lexicons) {
            let lex_path = dir.join("lexicons").join(format!("{}.tsv", spec.language));
            lexicon.write_tsv(&lex_path)?;
            written.push(lex_path);
            let records = transcripts_for(spec, lexicon, self.seed)?;
            let path = transcript_file(&dir.join("transcripts"), spec.language, &spec.model);
            write_records(&path, &records)?;
            written.push(path);
        }
        let emb = dir.join("embeddings.txt");
        self.embeddings.write(&emb)?;
        written.push(emb);
        let dict = dir.join("dictionary.tsv");
        write_dictionary(&dict, &self.dictionary)?;
        written.push(dict);
        Ok(written)
    }
}

/// Backend that answers from a synthetic plan.
#[derive(Debug)]
pub struct SyntheticBackend {
    model: String,
    seed: u64,
    specs: HashMap<LanguageCode, SyntheticSpec>,
    genders: HashMap<(LanguageCode, String), Gender>,
}

impl SyntheticBackend {
    pub fn new(corpus: &SyntheticCorpus, model: &str) -> Self {
        let specs = corpus.specs.iter().map(|s| (s.language, s.clone())).collect();
        let genders = corpus
            .lexicons
            .iter()
            .flat_map(|l| l.entries().iter().map(|n| ((n.language, n.surface.clone()), n.gender)))
            .collect();
        SyntheticBackend {
            model: model.to_string(),
            seed: corpus.seed,
            specs,
            genders,
        }
    }

    pub fn from_plan_file(path: &Path, model: &str, seed_value: u64) -> Result<Self> {
        let plan = SyntheticPlan::load(path)?;
        Ok(Self::new(&SyntheticCorpus::generate(&plan, seed_value)?, model))
    }
}

impl Backend for SyntheticBackend {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn summary(&self) -> String {
        format!("synthetic:{}", self.model)
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendReply> {
        let noun = request.noun;
        let spec = self
            .specs
            .get(&noun.language)
            .ok_or_else(|| Error::Validation(format!("synthetic plan has no language {}", noun.language)))?;
        // the planted gender, not whatever the caller's lexicon claims
        let gender = self
            .genders
            .get(&(noun.language, noun.surface.clone()))
            .ok_or_else(|| Error::Validation(format!("noun {:?} is not in the synthetic lexicon", noun.surface)))?;
        Ok(BackendReply {
            text: spec.respond(*gender, request.prompt_hash, request.sample_index, self.seed),
            timestamp: FIXED_TIMESTAMP.to_string(),
        })
    }
}
