//! Consistency checks over a fixture tree, plus the generator for the tree
//! shipped in `fixtures/`.
//!
//! ```text
//! fixtures/
//!   synthetic/            plan.toml, lexicons/, transcripts/, embeddings.txt, dictionary.tsv
//!   counts/bg.tsv         a 1414-row lexicon with the Bulgarian gender counts
//!   configs/*.toml        experiment configs over the trees above
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::describe::parse_text;
use crate::embed::{load_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::gateway::TranscriptRecord;
use crate::lexicon::{load_lexicon, Gender, LanguageCode, Lexicon, Noun};
use crate::synthetic::{LanguagePlan, SyntheticCorpus, SyntheticPlan};
use crate::translate::read_dictionary;

/// Share of dictionary targets that must have an embedding.
pub const MIN_EMBEDDING_COVERAGE: f64 = 0.95;
pub const FIXTURE_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FixtureReport {
    pub checks: Vec<Check>,
}

impl FixtureReport {
    fn push(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            ok,
            detail: detail.into(),
        });
    }

    fn record<T>(&mut self, name: &str, result: Result<T>, detail: impl FnOnce(&T) -> String) -> Option<T> {
        match result {
            Ok(v) => {
                let d = detail(&v);
                self.push(name, true, d);
                Some(v)
            }
            Err(e) => {
                self.push(name, false, e.to_string());
                None
            }
        }
    }

    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Fraction of distinct `targets` present in `table`.
pub fn embedding_coverage<'a>(targets: impl IntoIterator<Item = &'a str>, table: &EmbeddingTable) -> f64 {
    let distinct: BTreeSet<&str> = targets.into_iter().collect();
    if distinct.is_empty() {
        return 1.0;
    }
    distinct.iter().filter(|t| table.contains(t)).count() as f64 / distinct.len() as f64
}

fn sorted_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == extension) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

/// Language of a `{lang}__{model}.jsonl` or `{lang}.tsv` file.
fn language_of(path: &Path) -> Result<LanguageCode> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    stem.split("__").next().unwrap_or_default().parse()
}

/// Check one corpus directory: lexicons, transcripts, dictionary and
/// embeddings, and the cross-references between them.
pub fn verify_corpus(dir: &Path, report: &mut FixtureReport) {
    let label = |what: &str| {
        format!(
            "{}/{what}",
            dir.file_name().and_then(|n| n.to_str()).unwrap_or("corpus")
        )
    };

    let mut lexicons: BTreeMap<LanguageCode, Lexicon> = BTreeMap::new();
    match sorted_files(&dir.join("lexicons"), "tsv") {
        Ok(files) => {
            for path in files {
                let name = label(&format!("lexicons/{}", path.file_name().unwrap().to_string_lossy()));
                let loaded = language_of(&path).and_then(|l| load_lexicon(&path, l));
                if let Some(lex) = report.record(&name, loaded, |l| format!("{} nouns", l.len())) {
                    lexicons.insert(lex.language(), lex);
                }
            }
        }
        Err(e) => report.push(label("lexicons"), false, e.to_string()),
    }

    let dictionary = report.record(
        &label("dictionary.tsv"),
        read_dictionary(&dir.join("dictionary.tsv")),
        |d| format!("{} entries", d.len()),
    );
    let embeddings = report.record(
        &label("embeddings.txt"),
        load_embeddings(dir.join("embeddings.txt")),
        |t| format!("{} tokens, dimension {}", t.len(), t.dimension()),
    );

    let known: BTreeSet<(LanguageCode, &str)> = dictionary
        .iter()
        .flatten()
        .map(|e| (e.source_language, e.source.as_str()))
        .collect();
    match sorted_files(&dir.join("transcripts"), "jsonl") {
        Ok(files) => {
            for path in files {
                let file = path.file_name().unwrap().to_string_lossy().to_string();
                let name = label(&format!("transcripts/{file}"));
                let Some((language, records)) = report.record(
                    &name,
                    language_of(&path).and_then(|l| Ok((l, read_transcript(&path)?))),
                    |(_, r)| format!("{} records", r.len()),
                ) else {
                    continue;
                };
                let missing_nouns: BTreeSet<&str> = records
                    .iter()
                    .map(|r| r.noun.as_str())
                    .filter(|n| lexicons.get(&language).is_none_or(|lex| lex.get(n).is_none()))
                    .collect();
                report.push(
                    format!("{name} nouns in lexicon"),
                    missing_nouns.is_empty(),
                    if missing_nouns.is_empty() {
                        "all present".to_string()
                    } else {
                        format!(
                            "missing from {language} lexicon: {}",
                            missing_nouns.into_iter().collect::<Vec<_>>().join(", ")
                        )
                    },
                );
                if dictionary.is_some() {
                    let mut untranslated: BTreeSet<String> = BTreeSet::new();
                    for r in &records {
                        for token in parse_text(&r.raw_text) {
                            if !known.contains(&(language, token.as_str())) {
                                untranslated.insert(token);
                            }
                        }
                    }
                    report.push(
                        format!("{name} adjectives in dictionary"),
                        untranslated.is_empty(),
                        if untranslated.is_empty() {
                            "all covered".to_string()
                        } else {
                            format!(
                                "no entry for: {}",
                                untranslated.into_iter().collect::<Vec<_>>().join(", ")
                            )
                        },
                    );
                }
            }
        }
        Err(e) => report.push(label("transcripts"), false, e.to_string()),
    }

    if let (Some(dictionary), Some(table)) = (&dictionary, &embeddings) {
        let coverage = embedding_coverage(dictionary.iter().map(|e| e.target.as_str()), table);
        report.push(
            label("embedding coverage"),
            coverage >= MIN_EMBEDDING_COVERAGE,
            format!(
                "{:.1}% of dictionary targets (need {:.0}%)",
                coverage * 100.0,
                MIN_EMBEDDING_COVERAGE * 100.0
            ),
        );
    }

    if dir.join("plan.toml").exists() {
        report.record(&label("plan.toml"), SyntheticPlan::load(&dir.join("plan.toml")), |p| {
            format!("{} languages", p.languages.len())
        });
    }
}

/// Verify the whole fixture tree rooted at `root`.
pub fn verify_fixtures(root: &Path) -> FixtureReport {
    let mut report = FixtureReport::default();
    verify_corpus(&root.join("synthetic"), &mut report);
    match sorted_files(&root.join("counts"), "tsv") {
        Ok(files) => {
            for path in files {
                let name = format!("counts/{}", path.file_name().unwrap().to_string_lossy());
                let loaded = language_of(&path).and_then(|l| load_lexicon(&path, l));
                report.record(&name, loaded, |l| {
                    let c = l.counts();
                    format!(
                        "{} total={} masc={} fem={}",
                        l.language(),
                        c.total,
                        c.masculine,
                        c.feminine
                    )
                });
            }
        }
        Err(e) => report.push("counts", false, e.to_string()),
    }
    match sorted_files(&root.join("configs"), "toml") {
        Ok(files) => {
            for path in files {
                let name = format!("configs/{}", path.file_name().unwrap().to_string_lossy());
                report.record(&name, ExperimentConfig::load(&path), |c| {
                    format!("{} languages", c.languages.len())
                });
            }
        }
        Err(e) => report.push("configs", false, e.to_string()),
    }
    report
}

/// The plan behind `fixtures/synthetic`: three languages of 60 nouns with
/// ten samples each. Spanish and Italian share a semantic group and inflect
/// their adjectives (translation collisions); German has its own group; one
/// neutral pivot per group has no embedding.
pub fn fixture_plan() -> SyntheticPlan {
    let mut es = LanguagePlan::new(LanguageCode::Es);
    es.semantic_group = "romance".into();
    es.inflect = true;
    es.synonyms = 2;
    es.animate_fraction = 0.2;
    let mut it = LanguagePlan::new(LanguageCode::It);
    it.semantic_group = "romance".into();
    it.inflect = true;
    it.bias_strength = 0.8;
    it.masculine_fraction = 0.55;
    let mut de = LanguagePlan::new(LanguageCode::De);
    de.semantic_group = "germanic".into();
    de.bias_strength = 0.6;
    let mut plan = SyntheticPlan::new(vec![es, it, de]);
    plan.oov_neutral = 1;
    plan
}

/// A lexicon with the Bulgarian row counts (1414 nouns, 839 masculine,
/// 575 feminine) and placeholder surfaces. Genders alternate in a fixed
/// pattern so every prefix stays mixed.
pub fn counts_lexicon() -> Lexicon {
    let (total, masculine) = (1414usize, 839usize);
    let entries = (0..total)
        .map(|k| {
            // Bresenham-style spread of the masculine rows
            let is_m = (k + 1) * masculine / total > k * masculine / total;
            let gender = if is_m { Gender::Masculine } else { Gender::Feminine };
            Noun::new(
                format!("bg_noun{k:04}"),
                LanguageCode::Bg,
                gender,
                format!("noun{k:04}"),
                false,
            )
        })
        .collect();
    Lexicon::new(LanguageCode::Bg, entries).expect("generated lexicon is valid")
}

const REPLAY_CONFIG: &str = r#"# Replays the recorded synthetic transcripts.
languages = ["es", "it", "de"]
lexicon_dir = "../synthetic/lexicons"
transcripts_dir = "../synthetic/transcripts"
embeddings_path = "../synthetic/embeddings.txt"
dictionary_path = "../synthetic/dictionary.tsv"
n_samples = 10
seed = 7
min_support = 10
out_dir = "out"

[backend]
kind = "replay"
model = "synthetic"
transcript_path = "../synthetic/transcripts"

[train]
epochs = 200
"#;

const SYNTH_CONFIG: &str = r#"# Samples fresh answers from the synthetic plan; transcripts land in out/.
languages = ["es", "it", "de"]
n_samples = 10
seed = 7
min_support = 10
out_dir = "out"
transcripts_dir = "out/transcripts"

[backend]
kind = "synthetic"
model = "synthetic"
synthetic_plan = "../synthetic/plan.toml"
seed = 7
"#;

const COUNTS_CONFIG: &str = r#"# Lexicon statistics only.
languages = ["bg"]
lexicon_dir = "../counts"

[backend]
kind = "replay"
model = "none"
transcript_path = "../counts"
"#;

/// Rewrite the fixture tree under `root`.
pub fn write_fixture_tree(root: &Path) -> Result<Vec<PathBuf>> {
    let corpus = SyntheticCorpus::generate(&fixture_plan(), FIXTURE_SEED)?;
    let mut written = corpus.write(&root.join("synthetic"))?;
    let bg = root.join("counts").join("bg.tsv");
    counts_lexicon().write_tsv(&bg)?;
    written.push(bg);
    let configs = root.join("configs");
    fs::create_dir_all(&configs).map_err(|e| Error::io(&configs, e))?;
    for (name, text) in [
        ("replay.toml", REPLAY_CONFIG),
        ("synth.toml", SYNTH_CONFIG),
        ("counts.toml", COUNTS_CONFIG),
    ] {
        let path = configs.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
