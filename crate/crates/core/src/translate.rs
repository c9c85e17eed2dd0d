//! Pivot translation of adjectives.
//!
//! Adjectives are translated token by token to English, which strips gender
//! inflection (Spanish `bonito`/`bonita` both become `pretty`) and puts every
//! language in one vocabulary. Translations are cached in an append-only TSV
//! (`source_language`, `source`, `target`, `origin`); on reload the last line for a
//! key wins.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::describe::{normalize_token, AdjectiveProfile};
use crate::error::{Error, Result};
use crate::lexicon::LanguageCode;

pub const TRANSLATE_KEY_ENV: &str = "GENDERPROBE_TRANSLATE_KEY";
pub const DICTIONARY_HEADER: &str = "source_language\tsource\ttarget";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Online,
    Dictionary,
    /// Pivot-language input, or a dictionary miss passed through unchanged.
    Identity,
}

impl Origin {
    fn as_str(self) -> &'static str {
        match self {
            Origin::Online => "online",
            Origin::Dictionary => "dictionary",
            Origin::Identity => "identity",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Origin::Online),
            "dictionary" => Ok(Origin::Dictionary),
            "identity" => Ok(Origin::Identity),
            other => Err(Error::Validation(format!("unknown translation origin {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationEntry {
    pub source: String,
    pub source_language: LanguageCode,
    pub target: String,
}

/// Anything that can turn one adjective into English.
pub trait Translator: Send + Sync {
    fn translate(&self, token: &str, language: LanguageCode) -> Result<(String, Origin)>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    #[default]
    Error,
    /// Return the source token unchanged, with origin `identity`.
    PassThrough,
}

/// Offline bilingual dictionary, loaded from a TSV with header
/// `source_language`, `source`, `target`.
#[derive(Debug, Clone, Default)]
pub struct DictionaryTranslator {
    entries: HashMap<(LanguageCode, String), String>,
    miss_policy: MissPolicy,
}

impl DictionaryTranslator {
    pub fn new(entries: impl IntoIterator<Item = TranslationEntry>, miss_policy: MissPolicy) -> Self {
        DictionaryTranslator {
            entries: entries
                .into_iter()
                .map(|e| ((e.source_language, e.source), e.target))
                .collect(),
            miss_policy,
        }
    }

    pub fn load(path: &Path, miss_policy: MissPolicy) -> Result<Self> {
        Ok(Self::new(read_dictionary(path)?, miss_policy))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, token: &str, language: LanguageCode) -> bool {
        self.entries.contains_key(&(language, token.to_string()))
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.entries.values().map(String::as_str)
    }
}

impl Translator for DictionaryTranslator {
    fn translate(&self, token: &str, language: LanguageCode) -> Result<(String, Origin)> {
        match self.entries.get(&(language, token.to_string())) {
            Some(target) => Ok((target.clone(), Origin::Dictionary)),
            None => match self.miss_policy {
                MissPolicy::Error => Err(Error::Translation {
                    language: language.to_string(),
                    tokens: vec![token.to_string()],
                }),
                MissPolicy::PassThrough => {
                    log::warn!("no dictionary entry for {token:?} ({language}); passing through");
                    Ok((token.to_string(), Origin::Identity))
                }
            },
        }
    }
}

pub fn read_dictionary(path: &Path) -> Result<Vec<TranslationEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if idx == 0 {
            if line.trim_end() != DICTIONARY_HEADER {
                return Err(Error::parse(path, 1, format!("expected header {DICTIONARY_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let source_language = cols[0]
            .parse()
            .map_err(|e: Error| Error::parse(path, idx + 1, e.to_string()))?;
        entries.push(TranslationEntry {
            source: cols[1].to_string(),
            source_language,
            target: cols[2].to_string(),
        });
    }
    Ok(entries)
}

pub fn write_dictionary(path: &Path, entries: &[TranslationEntry]) -> Result<()> {
    let mut out = String::from(DICTIONARY_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!("{}\t{}\t{}\n", e.source_language, e.source, e.target));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// HTTP translation client. Sends `{q, source, target: "en", format: "text"}`
/// (plus `key` when the key variable is set) and accepts either a top-level
/// `translatedText` or `data.translations[0].translatedText`.
pub struct HttpTranslator {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTranslator {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTranslator {
            endpoint: endpoint.to_string(),
            api_key: std::env::var(TRANSLATE_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent,
        }
    }
}

fn translated_text(value: &Value) -> Option<&str> {
    value
        .get("translatedText")
        .or_else(|| value.get("data")?.get("translations")?.get(0)?.get("translatedText"))
        .and_then(Value::as_str)
}

impl Translator for HttpTranslator {
    fn translate(&self, token: &str, language: LanguageCode) -> Result<(String, Origin)> {
        let mut body = json!({"q": token, "source": language.as_str(), "target": "en", "format": "text"});
        if let Some(key) = &self.api_key {
            body["key"] = Value::String(key.clone());
        }
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| Error::Transport(format!("translate {token:?}: {e}")))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(Error::Transport(format!("translate {token:?}: HTTP {status}")));
        }
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("translate {token:?}: {e}")))?;
        let text = translated_text(&value)
            .ok_or_else(|| Error::Transport(format!("translate {token:?}: no translatedText in response")))?;
        Ok((text.to_string(), Origin::Online))
    }
}

type CacheKey = (LanguageCode, String);

/// Concurrent-read translation cache with an optional append-only backing file.
#[derive(Default)]
pub struct TranslationCache {
    entries: RwLock<HashMap<CacheKey, (String, Origin)>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create) a cache file and load its entries.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 4 {
                    return Err(Error::parse(
                        &path,
                        idx + 1,
                        format!("expected 4 columns, found {}", cols.len()),
                    ));
                }
                let language: LanguageCode = cols[0]
                    .parse()
                    .map_err(|e: Error| Error::parse(&path, idx + 1, e.to_string()))?;
                let origin: Origin = cols[3]
                    .parse()
                    .map_err(|e: Error| Error::parse(&path, idx + 1, e.to_string()))?;
                entries.insert((language, cols[1].to_string()), (cols[2].to_string(), origin));
            }
        } else if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(TranslationCache {
            entries: RwLock::new(entries),
            file: Some((path, Mutex::new(file))),
        })
    }

    pub fn get(&self, token: &str, language: LanguageCode) -> Option<(String, Origin)> {
        self.entries
            .read()
            .expect("translation cache poisoned")
            .get(&(language, token.to_string()))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("translation cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, token: &str, language: LanguageCode, target: &str, origin: Origin) -> Result<()> {
        if let Some((path, file)) = &self.file {
            let line = format!("{language}\t{token}\t{target}\t{origin}\n");
            let mut file = file.lock().expect("translation cache file poisoned");
            file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries
            .write()
            .expect("translation cache poisoned")
            .insert((language, token.to_string()), (target.to_string(), origin));
        Ok(())
    }
}

/// Translate one normalized adjective to English, consulting the cache first.
pub fn translate_adjective(
    cache: &TranslationCache,
    client: &dyn Translator,
    token: &str,
    language: LanguageCode,
) -> Result<String> {
    if language.is_pivot() {
        return Ok(token.to_string());
    }
    if let Some((target, _)) = cache.get(token, language) {
        return Ok(target);
    }
    let (raw, origin) = client.translate(token, language).map_err(|e| match e {
        Error::Translation { .. } | Error::Transport(_) => e,
        other => Error::Translation {
            language: language.to_string(),
            tokens: vec![format!("{token} ({other})")],
        },
    })?;
    let target = normalize_token(&raw).ok_or_else(|| Error::Translation {
        language: language.to_string(),
        tokens: vec![format!("{token} (empty translation {raw:?})")],
    })?;
    cache.insert(token, language, &target, origin)?;
    Ok(target)
}

/// Replace every adjective with its pivot form. Adjectives that collapse onto
/// one pivot token have their frequencies summed and clamped to 1. All
/// failing tokens are reported together.
pub fn translate_profile(
    profile: &AdjectiveProfile,
    cache: &TranslationCache,
    client: &dyn Translator,
) -> Result<AdjectiveProfile> {
    let language = profile.adjective_language;
    let mut merged: BTreeMap<String, f64> = BTreeMap::new();
    let mut failed = Vec::new();
    for (token, &f) in &profile.entries {
        match translate_adjective(cache, client, token, language) {
            Ok(target) => *merged.entry(target).or_insert(0.0) += f,
            Err(Error::Translation { tokens, .. }) => failed.extend(tokens),
            Err(Error::Transport(msg)) => failed.push(format!("{token} ({msg})")),
            Err(other) => return Err(other),
        }
    }
    if !failed.is_empty() {
        return Err(Error::Translation {
            language: language.to_string(),
            tokens: failed,
        });
    }
    for f in merged.values_mut() {
        *f = f.min(1.0);
    }
    Ok(AdjectiveProfile {
        noun: profile.noun.clone(),
        adjective_language: LanguageCode::En,
        n_samples: profile.n_samples,
        truncated_to: profile.truncated_to,
        entries: merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Gender, Noun};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(DictionaryTranslator, AtomicUsize);

    impl Translator for Counting {
        fn translate(&self, token: &str, language: LanguageCode) -> Result<(String, Origin)> {
            self.1.fetch_add(1, Ordering::SeqCst);
            self.0.translate(token, language)
        }
    }

    fn entry(lang: LanguageCode, source: &str, target: &str) -> TranslationEntry {
        TranslationEntry {
            source: source.into(),
            source_language: lang,
            target: target.into(),
        }
    }

    fn spanish() -> DictionaryTranslator {
        DictionaryTranslator::new(
            vec![
                entry(LanguageCode::Es, "bonita", "pretty"),
                entry(LanguageCode::Es, "bonito", "Pretty "),
                entry(LanguageCode::Es, "viejo", "old"),
            ],
            MissPolicy::Error,
        )
    }

    fn profile(entries: &[(&str, f64)]) -> AdjectiveProfile {
        AdjectiveProfile {
            noun: Noun::new("puente", LanguageCode::Es, Gender::Masculine, "bridge", false),
            adjective_language: LanguageCode::Es,
            n_samples: 10,
            truncated_to: 50,
            entries: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn translates_and_caches() {
        let cache = TranslationCache::in_memory();
        let client = Counting(spanish(), AtomicUsize::new(0));
        assert_eq!(
            translate_adjective(&cache, &client, "bonita", LanguageCode::Es).unwrap(),
            "pretty"
        );
        assert_eq!(
            translate_adjective(&cache, &client, "bonita", LanguageCode::Es).unwrap(),
            "pretty"
        );
        assert_eq!(client.1.load(Ordering::SeqCst), 1);
        // targets are normalized
        assert_eq!(
            translate_adjective(&cache, &client, "bonito", LanguageCode::Es).unwrap(),
            "pretty"
        );
        assert_eq!(
            translate_adjective(&cache, &client, "old", LanguageCode::En).unwrap(),
            "old"
        );
        assert_eq!(client.1.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn miss_policies() {
        let cache = TranslationCache::in_memory();
        let strict = spanish();
        match translate_adjective(&cache, &strict, "rojo", LanguageCode::Es) {
            Err(Error::Translation { tokens, .. }) => assert_eq!(tokens, ["rojo"]),
            other => panic!("{other:?}"),
        }
        let lenient = DictionaryTranslator {
            miss_policy: MissPolicy::PassThrough,
            ..spanish()
        };
        assert_eq!(
            translate_adjective(&cache, &lenient, "rojo", LanguageCode::Es).unwrap(),
            "rojo"
        );
        assert_eq!(cache.get("rojo", LanguageCode::Es).unwrap().1, Origin::Identity);
    }

    #[test]
    fn collisions_sum_then_clamp() {
        let cache = TranslationCache::in_memory();
        let merged = translate_profile(&profile(&[("bonito", 0.4), ("bonita", 0.3)]), &cache, &spanish()).unwrap();
        assert_eq!(merged.entries.len(), 1);
        assert!((merged.entries["pretty"] - 0.7).abs() < 1e-15);
        assert!(merged.is_pivot());
        let clamped = translate_profile(&profile(&[("bonito", 0.8), ("bonita", 0.6)]), &cache, &spanish()).unwrap();
        assert_eq!(clamped.entries["pretty"], 1.0);
    }

    #[test]
    fn all_failures_reported_together() {
        let cache = TranslationCache::in_memory();
        let err = translate_profile(
            &profile(&[("rojo", 0.1), ("viejo", 0.2), ("azul", 0.3)]),
            &cache,
            &spanish(),
        )
        .unwrap_err();
        match err {
            Error::Translation { tokens, .. } => assert_eq!(tokens, ["azul", "rojo"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn merge_matches_brute_force_oracle() {
        // 50 source adjectives; 7 pairs collapse onto a shared target
        let mut dict = Vec::new();
        let mut entries = Vec::new();
        for i in 0..50 {
            let target = if i < 14 { format!("t{}", i / 2) } else { format!("t{i}") };
            dict.push(entry(LanguageCode::Es, &format!("s{i:02}"), &target));
            entries.push((format!("s{i:02}"), ((i * 37) % 50 + 1) as f64 / 50.0));
        }
        let translator = DictionaryTranslator::new(dict.clone(), MissPolicy::Error);
        let source = AdjectiveProfile {
            entries: entries.iter().cloned().collect(),
            ..profile(&[])
        };
        let pivot = translate_profile(&source, &TranslationCache::in_memory(), &translator).unwrap();

        let mut oracle: Vec<(String, f64)> = Vec::new();
        for (src, f) in &entries {
            let target = &dict.iter().find(|e| &e.source == src).unwrap().target;
            match oracle.iter_mut().find(|(t, _)| t == target) {
                Some(slot) => slot.1 += f,
                None => oracle.push((target.clone(), *f)),
            }
        }
        assert_eq!(oracle.len(), 43);
        assert_eq!(pivot.entries.len(), 43);
        for (target, mass) in oracle {
            assert!((pivot.entries[&target] - mass.min(1.0)).abs() < 1e-12, "{target}");
        }
    }

    #[test]
    fn injective_dictionary_preserves_frequencies() {
        let translator = DictionaryTranslator::new(
            (0..20).map(|i| entry(LanguageCode::It, &format!("a{i}"), &format!("b{i}"))),
            MissPolicy::Error,
        );
        let mut source = profile(&[]);
        source.noun.language = LanguageCode::It;
        source.adjective_language = LanguageCode::It;
        source.entries = (0..20).map(|i| (format!("a{i}"), (i + 1) as f64 / 20.0)).collect();
        let pivot = translate_profile(&source, &TranslationCache::in_memory(), &translator).unwrap();
        let mut before: Vec<f64> = source.entries.values().cloned().collect();
        let mut after: Vec<f64> = pivot.entries.values().cloned().collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        assert_eq!(before, after);
    }

    #[test]
    fn cache_file_round_trip_last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        {
            let cache = TranslationCache::open(&path).unwrap();
            cache
                .insert("bonita", LanguageCode::Es, "pretty", Origin::Dictionary)
                .unwrap();
            cache
                .insert("schön", LanguageCode::De, "beautiful", Origin::Online)
                .unwrap();
            cache
                .insert("bonita", LanguageCode::Es, "beautiful", Origin::Online)
                .unwrap();
        }
        let reloaded = TranslationCache::open(&path).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert_eq!(
            reloaded.get("bonita", LanguageCode::Es),
            Some(("beautiful".into(), Origin::Online))
        );
        assert_eq!(
            reloaded.get("schön", LanguageCode::De),
            Some(("beautiful".into(), Origin::Online))
        );
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "es\tbonita\tpretty\tdictionary");
    }

    #[test]
    fn dictionary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.tsv");
        let entries = vec![
            entry(LanguageCode::Es, "bonita", "pretty"),
            entry(LanguageCode::Bg, "стар", "old"),
        ];
        write_dictionary(&path, &entries).unwrap();
        assert_eq!(read_dictionary(&path).unwrap(), entries);
        fs::write(&path, format!("{DICTIONARY_HEADER}\nxx\ta\tb\n")).unwrap();
        assert!(matches!(read_dictionary(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn translated_text_shapes() {
        let flat: Value = serde_json::from_str(r#"{"translatedText":"pretty"}"#).unwrap();
        let nested: Value = serde_json::from_str(r#"{"data":{"translations":[{"translatedText":"old"}]}}"#).unwrap();
        assert_eq!(translated_text(&flat), Some("pretty"));
        assert_eq!(translated_text(&nested), Some("old"));
    }
}
