//! From raw completions to per-noun adjective frequency profiles.
//!
//! A profile maps each adjective to the fraction of promptings whose answer
//! contained it. The denominator is the number of promptings, so answers that
//! parse to nothing still count.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::Completion;
use crate::lexicon::{Gender, LanguageCode, Lexicon, Noun};

pub const MAX_TOKEN_CHARS: usize = 40;
pub const DEFAULT_TOP_P: usize = 50;

/// Adjectives parsed from one completion, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjectiveSet {
    pub noun: Noun,
    pub sample_index: usize,
    pub adjectives: Vec<String>,
}

impl AdjectiveSet {
    pub fn is_empty(&self) -> bool {
        self.adjectives.is_empty()
    }
}

fn is_edge_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '“' | '”' | '„' | '‘' | '’' | '«' | '»' | '…' | '।' | '。' | '、' | '¿' | '¡' | '·' | '–' | '—'
        )
}

/// Lowercase, trim edge punctuation and whitespace, collapse inner
/// whitespace. Returns `None` for tokens that end up empty or too long.
pub fn normalize_token(raw: &str) -> Option<String> {
    let lowered = raw.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| c.is_whitespace() || is_edge_punctuation(c));
    let collapsed = trimmed.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() || collapsed.chars().count() > MAX_TOKEN_CHARS {
        None
    } else {
        Some(collapsed)
    }
}

/// The answer part of a completion: after leading whitespace, the text up to
/// the first line break or the next `***` marker.
fn answer_span(raw: &str) -> &str {
    let raw = raw.trim_start();
    let end = [raw.find('\n'), raw.find('\r'), raw.find("***")]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(raw.len());
    &raw[..end]
}

pub fn parse_text(raw: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    answer_span(raw)
        .split(',')
        .filter_map(normalize_token)
        .filter(|token| seen.insert(token.clone()))
        .collect()
}

pub fn parse_completion(completion: &Completion) -> AdjectiveSet {
    let adjectives = parse_text(&completion.raw_text);
    if adjectives.is_empty() {
        log::warn!(
            "sample {} of {:?} parsed to no adjectives",
            completion.sample_index,
            completion.noun.surface
        );
    }
    AdjectiveSet {
        noun: completion.noun.clone(),
        sample_index: completion.sample_index,
        adjectives,
    }
}

/// Per-noun adjective frequencies, truncated to the top `truncated_to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjectiveProfile {
    pub noun: Noun,
    /// Language of the adjective tokens: the noun's language before
    /// translation, English after.
    pub adjective_language: LanguageCode,
    pub n_samples: usize,
    pub truncated_to: usize,
    pub entries: BTreeMap<String, f64>,
}

impl AdjectiveProfile {
    pub fn is_pivot(&self) -> bool {
        self.adjective_language.is_pivot()
    }

    pub fn contains(&self, adjective: &str) -> bool {
        self.entries.contains_key(adjective)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Frequency of each adjective over `n_samples` promptings, keeping the `p`
/// most frequent. Ties at the cut are broken by ascending token order.
pub fn aggregate(sets: &[AdjectiveSet], n_samples: usize, p: usize) -> Result<AdjectiveProfile> {
    if p == 0 {
        return Err(Error::Validation("top-p must be at least 1".into()));
    }
    if sets.len() != n_samples || n_samples == 0 {
        return Err(Error::Validation(format!(
            "expected {n_samples} sample sets, got {}",
            sets.len()
        )));
    }
    let noun = &sets[0].noun;
    if let Some(other) = sets.iter().find(|s| s.noun != *noun) {
        return Err(Error::Validation(format!(
            "sample sets span several nouns ({:?} and {:?})",
            noun.surface, other.noun.surface
        )));
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for set in sets {
        let mut in_set = HashSet::new();
        for adjective in &set.adjectives {
            if in_set.insert(adjective.as_str()) {
                *counts.entry(adjective.as_str()).or_default() += 1;
            }
        }
    }

    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(p);

    let entries = ranked
        .into_iter()
        .map(|(adjective, count)| (adjective.to_string(), count as f64 / n_samples as f64))
        .collect();
    Ok(AdjectiveProfile {
        noun: noun.clone(),
        adjective_language: noun.language,
        n_samples,
        truncated_to: p,
        entries,
    })
}

/// Parse and aggregate the completions of one noun.
pub fn profile_completions(completions: &[Completion], p: usize) -> Result<(AdjectiveProfile, usize)> {
    let sets: Vec<AdjectiveSet> = completions.iter().map(parse_completion).collect();
    let empty = sets.iter().filter(|s| s.is_empty()).count();
    Ok((aggregate(&sets, completions.len(), p)?, empty))
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileLine {
    noun: String,
    language: LanguageCode,
    gender: Gender,
    n_samples: usize,
    entries: BTreeMap<String, f64>,
}

/// Write profiles as JSON lines `{noun, language, gender, n_samples, entries}`.
pub fn write_profiles(path: &Path, profiles: &[AdjectiveProfile]) -> Result<()> {
    let mut out = String::new();
    for profile in profiles {
        let line = ProfileLine {
            noun: profile.noun.surface.clone(),
            language: profile.noun.language,
            gender: profile.noun.gender,
            n_samples: profile.n_samples,
            entries: profile.entries.clone(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a profile store, re-attaching nouns from `lexicon`.
/// `adjective_language` says whether the stored tokens are source or pivot.
pub fn read_profiles(
    path: &Path,
    lexicon: &Lexicon,
    adjective_language: LanguageCode,
    truncated_to: usize,
) -> Result<Vec<AdjectiveProfile>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut profiles = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ProfileLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        let noun = lexicon
            .get(&parsed.noun)
            .filter(|n| n.gender == parsed.gender && n.language == parsed.language)
            .ok_or_else(|| Error::parse(path, idx + 1, format!("noun {:?} not in lexicon", parsed.noun)))?;
        profiles.push(AdjectiveProfile {
            noun: noun.clone(),
            adjective_language,
            n_samples: parsed.n_samples,
            truncated_to,
            entries: parsed.entries,
        });
    }
    Ok(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Gender;
    use proptest::prelude::*;

    fn noun() -> Noun {
        Noun::new("botella", LanguageCode::Es, Gender::Feminine, "bottle", false)
    }

    fn set(idx: usize, adjectives: &[&str]) -> AdjectiveSet {
        AdjectiveSet {
            noun: noun(),
            sample_index: idx,
            adjectives: adjectives.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn completion(text: &str) -> Completion {
        Completion {
            noun: noun(),
            sample_index: 0,
            raw_text: text.into(),
            backend: "test".into(),
            timestamp: String::new(),
        }
    }

    #[test]
    fn parses_reference_answer() {
        let parsed = parse_completion(&completion(
            "glass, sleek, thin, brittle, elegant, transparent, clear, tall, fragile, shiny",
        ));
        assert_eq!(
            parsed.adjectives,
            [
                "glass",
                "sleek",
                "thin",
                "brittle",
                "elegant",
                "transparent",
                "clear",
                "tall",
                "fragile",
                "shiny"
            ]
        );
    }

    #[test]
    fn normalization_dedup_and_first_line() {
        assert_eq!(parse_text(" Old,  old, RED.\nExtra prose"), ["old", "red"]);
        assert_eq!(parse_text("tall, dark ***Question***: more, words"), ["tall", "dark"]);
        assert_eq!(parse_text("Very   Old, «Bonita»"), ["very old", "bonita"]);
        assert_eq!(parse_text("СТАРЫЙ, Ωραίο"), ["старый", "ωραίο"]);
    }

    #[test]
    fn degenerate_input_is_empty() {
        assert!(parse_completion(&completion(",,,")).is_empty());
        assert!(parse_text("***\nafter a marker").is_empty());
        assert_eq!(parse_text("\n  leading, blank"), ["leading", "blank"]);
        let long = "x".repeat(41);
        assert!(parse_text(&long).is_empty());
        assert_eq!(parse_text(&"y".repeat(40)).len(), 1);
    }

    #[test]
    fn aggregate_small_example() {
        let profile = aggregate(&[set(0, &["old", "red"]), set(1, &["old"])], 2, 50).unwrap();
        assert_eq!(
            profile.entries,
            BTreeMap::from([("old".to_string(), 1.0), ("red".to_string(), 0.5)])
        );
    }

    #[test]
    fn half_of_fifty() {
        let sets: Vec<_> = (0..50)
            .map(|i| if i % 2 == 0 { set(i, &["warm"]) } else { set(i, &[]) })
            .collect();
        let profile = aggregate(&sets, 50, 50).unwrap();
        assert_eq!(profile.entries["warm"], 0.5);
    }

    #[test]
    fn aggregate_errors() {
        assert!(aggregate(&[set(0, &["a"])], 2, 5).is_err());
        let mut other = set(1, &["a"]);
        other.noun.surface = "piedra".into();
        assert!(aggregate(&[set(0, &["a"]), other], 2, 5).is_err());
        assert!(aggregate(&[set(0, &["a"])], 1, 0).is_err());
    }

    #[test]
    fn ties_at_cut_are_lexicographic() {
        let sets = vec![set(0, &["d", "c", "b", "a"]), set(1, &["z"]), set(2, &["z"])];
        let profile = aggregate(&sets, 3, 3).unwrap();
        assert_eq!(profile.entries.keys().collect::<Vec<_>>(), ["a", "b", "z"]);
    }

    #[test]
    fn profile_store_round_trip() {
        let lexicon = Lexicon::new(LanguageCode::Es, vec![noun()]).unwrap();
        let profile = aggregate(&[set(0, &["verde", "alto"]), set(1, &["verde"]), set(2, &[])], 3, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.jsonl");
        write_profiles(&path, std::slice::from_ref(&profile)).unwrap();
        let back = read_profiles(&path, &lexicon, LanguageCode::Es, 50).unwrap();
        assert_eq!(back, vec![profile]);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text
            .starts_with("{\"noun\":\"botella\",\"language\":\"es\",\"gender\":\"f\",\"n_samples\":3,\"entries\":{"));
    }

    proptest! {
        #[test]
        fn frequencies_are_multiples_of_one_over_n(
            raw in proptest::collection::vec(proptest::collection::vec(0u8..30, 0..8), 1..25),
            p in 1usize..40,
        ) {
            let n = raw.len();
            let sets: Vec<_> = raw.iter().enumerate().map(|(i, s)| AdjectiveSet {
                noun: noun(),
                sample_index: i,
                adjectives: s.iter().map(|k| format!("a{k}")).collect::<Vec<_>>(),
            }).collect();
            let profile = aggregate(&sets, n, p).unwrap();
            prop_assert!(profile.len() <= p);
            for &f in profile.entries.values() {
                prop_assert!(f >= 1.0 / n as f64 && f <= 1.0);
                let scaled = f * n as f64;
                prop_assert!((scaled - scaled.round()).abs() < 1e-9);
            }
            // the kept set dominates the dropped set
            let mut all = aggregate(&sets, n, usize::MAX).unwrap().entries;
            let min_kept = profile.entries.values().cloned().fold(f64::INFINITY, f64::min);
            for k in profile.entries.keys() { all.remove(k); }
            for (token, &f) in &all {
                prop_assert!(f <= min_kept);
                if f == min_kept {
                    let boundary_max = profile.entries.iter().filter(|(_, &v)| v == min_kept).map(|(k, _)| k).max().unwrap();
                    prop_assert!(token > boundary_max);
                }
            }
            // order of sample sets does not matter
            let mut reversed = sets.clone();
            reversed.reverse();
            prop_assert_eq!(aggregate(&reversed, n, p).unwrap().entries, profile.entries);
        }
    }
}
