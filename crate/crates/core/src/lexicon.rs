//! Gendered-noun lexicons.
//!
//! A lexicon file is a UTF-8, tab-separated table with the header
//! `surface`, `gender`, `pivot_gloss`, `animate`. Gender tokens are `m`, `f` or `n`
//! (neuter rows are counted and dropped); animate tokens are `0` or `1`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const LEXICON_HEADER: &str = "surface\tgender\tpivot_gloss\tanimate";

/// The ten source languages plus the English pivot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageCode {
    Bg,
    Cs,
    De,
    El,
    En,
    Es,
    Fr,
    Hi,
    It,
    Lv,
    Pt,
}

impl LanguageCode {
    pub const ALL: [LanguageCode; 11] = [
        LanguageCode::Bg,
        LanguageCode::Cs,
        LanguageCode::De,
        LanguageCode::El,
        LanguageCode::En,
        LanguageCode::Es,
        LanguageCode::Fr,
        LanguageCode::Hi,
        LanguageCode::It,
        LanguageCode::Lv,
        LanguageCode::Pt,
    ];

    /// Languages that supply gendered nouns (everything but the pivot).
    pub const SOURCES: [LanguageCode; 10] = [
        LanguageCode::Bg,
        LanguageCode::Cs,
        LanguageCode::De,
        LanguageCode::El,
        LanguageCode::Es,
        LanguageCode::Fr,
        LanguageCode::Hi,
        LanguageCode::It,
        LanguageCode::Lv,
        LanguageCode::Pt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageCode::Bg => "bg",
            LanguageCode::Cs => "cs",
            LanguageCode::De => "de",
            LanguageCode::El => "el",
            LanguageCode::En => "en",
            LanguageCode::Es => "es",
            LanguageCode::Fr => "fr",
            LanguageCode::Hi => "hi",
            LanguageCode::It => "it",
            LanguageCode::Lv => "lv",
            LanguageCode::Pt => "pt",
        }
    }

    pub fn english_name(self) -> &'static str {
        match self {
            LanguageCode::Bg => "Bulgarian",
            LanguageCode::Cs => "Czech",
            LanguageCode::De => "German",
            LanguageCode::El => "Greek",
            LanguageCode::En => "English",
            LanguageCode::Es => "Spanish",
            LanguageCode::Fr => "French",
            LanguageCode::Hi => "Hindi",
            LanguageCode::It => "Italian",
            LanguageCode::Lv => "Latvian",
            LanguageCode::Pt => "Portuguese",
        }
    }

    pub fn is_pivot(self) -> bool {
        self == LanguageCode::En
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LanguageCode::ALL
            .iter()
            .copied()
            .find(|code| code.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unsupported language code {s:?}")))
    }
}

/// Grammatical gender. Neuter never makes it past ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "f")]
    Feminine,
    #[serde(rename = "m")]
    Masculine,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Feminine => "f",
            Gender::Masculine => "m",
        }
    }

    /// Classifier target: masculine is the positive class.
    pub fn target(self) -> f64 {
        match self {
            Gender::Masculine => 1.0,
            Gender::Feminine => 0.0,
        }
    }

    pub fn flip(self) -> Gender {
        match self {
            Gender::Masculine => Gender::Feminine,
            Gender::Feminine => Gender::Masculine,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Noun {
    pub surface: String,
    pub language: LanguageCode,
    pub gender: Gender,
    /// English translation, used for cross-list matching and reporting.
    pub pivot_gloss: String,
    pub animate: bool,
}

impl Noun {
    pub fn new(
        surface: impl Into<String>,
        language: LanguageCode,
        gender: Gender,
        pivot_gloss: impl Into<String>,
        animate: bool,
    ) -> Self {
        Noun {
            surface: surface.into(),
            language,
            gender,
            pivot_gloss: pivot_gloss.into(),
            animate,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconCounts {
    pub total: usize,
    pub masculine: usize,
    pub feminine: usize,
}

impl LexiconCounts {
    fn tally(entries: &[Noun]) -> Self {
        let masculine = entries.iter().filter(|n| n.gender == Gender::Masculine).count();
        LexiconCounts {
            total: entries.len(),
            masculine,
            feminine: entries.len() - masculine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    language: LanguageCode,
    entries: Vec<Noun>,
    counts: LexiconCounts,
    /// Neuter rows seen (and dropped) at load time.
    neuter_dropped: usize,
}

impl Lexicon {
    /// Build a lexicon, checking the entry invariants. An empty entry list is
    /// allowed here; `load_lexicon` rejects empty files separately.
    pub fn new(language: LanguageCode, entries: Vec<Noun>) -> Result<Self> {
        if language.is_pivot() {
            return Err(Error::Validation(
                "the pivot language cannot be a source of gendered nouns".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for noun in &entries {
            if noun.language != language {
                return Err(Error::Validation(format!(
                    "noun {:?} is {} but the lexicon is {}",
                    noun.surface, noun.language, language
                )));
            }
            if noun.surface.trim().is_empty() {
                return Err(Error::Validation("empty noun surface".into()));
            }
            if !seen.insert(noun.surface.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate noun {:?} in {}",
                    noun.surface, language
                )));
            }
        }
        let counts = LexiconCounts::tally(&entries);
        Ok(Lexicon {
            language,
            entries,
            counts,
            neuter_dropped: 0,
        })
    }

    pub fn language(&self) -> LanguageCode {
        self.language
    }

    pub fn entries(&self) -> &[Noun] {
        &self.entries
    }

    pub fn counts(&self) -> LexiconCounts {
        self.counts
    }

    pub fn neuter_dropped(&self) -> usize {
        self.neuter_dropped
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&Noun> {
        self.entries.iter().find(|n| n.surface == surface)
    }

    /// Write in the lexicon TSV format.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(32 * (self.entries.len() + 1));
        out.push_str(LEXICON_HEADER);
        out.push('\n');
        for noun in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                noun.surface,
                noun.gender,
                noun.pivot_gloss,
                u8::from(noun.animate)
            ));
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Load a lexicon TSV. Entry order follows row order.
pub fn load_lexicon(path: impl AsRef<Path>, language: LanguageCode) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text, path, language)
}

pub(crate) fn parse_lexicon(text: &str, path: &Path, language: LanguageCode) -> Result<Lexicon> {
    if language.is_pivot() {
        return Err(Error::Validation(
            "the pivot language cannot be a source of gendered nouns".into(),
        ));
    }
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == LEXICON_HEADER => {}
        Some(_) => return Err(Error::parse(path, 1, format!("expected header {LEXICON_HEADER:?}"))),
        None => return Err(Error::Validation(format!("{}: empty lexicon", path.display()))),
    }

    let mut entries = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut neuter_dropped = 0;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let surface = cols[0].trim();
        if surface.is_empty() {
            return Err(Error::parse(path, line_no, "empty surface"));
        }
        let gender = match cols[1].trim() {
            "m" => Some(Gender::Masculine),
            "f" => Some(Gender::Feminine),
            "n" => None,
            other => return Err(Error::parse(path, line_no, format!("unknown gender token {other:?}"))),
        };
        let animate = match cols[3].trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(path, line_no, format!("unknown animate token {other:?}"))),
        };
        let Some(gender) = gender else {
            neuter_dropped += 1;
            continue;
        };
        if !seen.insert(surface.to_string()) {
            return Err(Error::parse(path, line_no, format!("duplicate noun {surface:?}")));
        }
        entries.push(Noun::new(surface, language, gender, cols[2].trim(), animate));
    }

    if entries.is_empty() {
        return Err(Error::Validation(format!(
            "{}: lexicon has no masculine or feminine nouns",
            path.display()
        )));
    }
    let mut lexicon = Lexicon::new(language, entries)?;
    lexicon.neuter_dropped = neuter_dropped;
    Ok(lexicon)
}

/// Drop animate nouns. Counts are recomputed; the result may be empty.
pub fn filter_animate(lexicon: &Lexicon) -> Lexicon {
    let entries: Vec<Noun> = lexicon.entries.iter().filter(|n| !n.animate).cloned().collect();
    Lexicon {
        language: lexicon.language,
        counts: LexiconCounts::tally(&entries),
        entries,
        neuter_dropped: lexicon.neuter_dropped,
    }
}

/// Train/test partition of one lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Noun>,
    pub test: Vec<Noun>,
    pub seed: u64,
}

/// Number of test nouns for a lexicon of `total` entries: 10%, rounded half up.
pub fn test_size(total: usize) -> usize {
    (total + 5) / 10
}

/// Seeded shuffle, then the first 10% (rounded) become the test set.
pub fn split_lexicon(lexicon: &Lexicon, seed: u64) -> Result<Split> {
    let total = lexicon.len();
    if total < 10 {
        return Err(Error::Validation(format!(
            "{} lexicon has {total} nouns; at least 10 are needed for a 90/10 split",
            lexicon.language
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut seed::rng(seed));
    let n_test = test_size(total);
    let test = order[..n_test].iter().map(|&i| lexicon.entries[i].clone()).collect();
    let train = order[n_test..].iter().map(|&i| lexicon.entries[i].clone()).collect();
    Ok(Split { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, lang: LanguageCode) -> Result<Lexicon> {
        parse_lexicon(text, Path::new("test.tsv"), lang)
    }

    fn synthetic(n: usize, animate_every: usize) -> Lexicon {
        let entries = (0..n)
            .map(|i| {
                let gender = if i % 3 == 0 {
                    Gender::Feminine
                } else {
                    Gender::Masculine
                };
                Noun::new(
                    format!("w{i}"),
                    LanguageCode::Es,
                    gender,
                    format!("g{i}"),
                    animate_every != usize::MAX && i % animate_every == 0,
                )
            })
            .collect();
        Lexicon::new(LanguageCode::Es, entries).unwrap()
    }

    #[test]
    fn single_row() {
        let lex = parse(
            "surface\tgender\tpivot_gloss\tanimate\ncasa\tf\thouse\t0\n",
            LanguageCode::Es,
        )
        .unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(
            lex.counts(),
            LexiconCounts {
                total: 1,
                masculine: 0,
                feminine: 1
            }
        );
        assert_eq!(lex.entries()[0].pivot_gloss, "house");
    }

    #[test]
    fn neuter_rows_are_dropped() {
        let mut text = String::from(LEXICON_HEADER);
        text.push('\n');
        for i in 0..10 {
            let g = if i == 4 {
                "n"
            } else if i % 2 == 0 {
                "m"
            } else {
                "f"
            };
            text.push_str(&format!("wort{i}\t{g}\tword{i}\t0\n"));
        }
        let lex = parse(&text, LanguageCode::De).unwrap();
        assert_eq!(lex.len(), 9);
        assert_eq!(lex.neuter_dropped(), 1);
        assert_eq!(lex.counts().masculine + lex.counts().feminine, lex.counts().total);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let bad_cols = format!("{LEXICON_HEADER}\ncasa\tf\thouse\t0\nperro\tm\tdog\n");
        match parse(&bad_cols, LanguageCode::Es) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_gender = format!("{LEXICON_HEADER}\ncasa\tx\thouse\t0\n");
        match parse(&bad_gender, LanguageCode::Es) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("gender"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_animate = format!("{LEXICON_HEADER}\ncasa\tf\thouse\tyes\n");
        assert!(matches!(
            parse(&bad_animate, LanguageCode::Es),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_and_header_errors() {
        assert!(matches!(parse("", LanguageCode::Es), Err(Error::Validation(_))));
        assert!(matches!(
            parse(LEXICON_HEADER, LanguageCode::Es),
            Err(Error::Validation(_))
        ));
        let only_neuter = format!("{LEXICON_HEADER}\nhaus\tn\thouse\t0\n");
        assert!(matches!(
            parse(&only_neuter, LanguageCode::De),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse("a\tb\n", LanguageCode::Es),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicates_rejected_even_across_genders() {
        let text = format!("{LEXICON_HEADER}\ncapital\tm\tcapital\t0\ncapital\tf\tcapital city\t0\n");
        assert!(matches!(
            parse(&text, LanguageCode::Es),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn pivot_language_rejected() {
        let text = format!("{LEXICON_HEADER}\nhouse\tm\thouse\t0\n");
        assert!(matches!(parse(&text, LanguageCode::En), Err(Error::Validation(_))));
    }

    #[test]
    fn filter_animate_examples() {
        let entries = vec![
            Noun::new("uncle", LanguageCode::Es, Gender::Masculine, "uncle", true),
            Noun::new("bridge", LanguageCode::Es, Gender::Masculine, "bridge", false),
        ];
        let lex = Lexicon::new(LanguageCode::Es, entries).unwrap();
        let filtered = filter_animate(&lex);
        assert_eq!(filtered.len(), 1);
        assert_eq!(filtered.entries()[0].surface, "bridge");

        let none_animate = synthetic(20, usize::MAX);
        assert_eq!(filter_animate(&none_animate), none_animate);
    }

    #[test]
    fn filter_animate_matches_linear_scan() {
        // 100 nouns, animate flag on 37 of them (every index with i*7 % 100 < 37)
        let entries = (0..100)
            .map(|i| {
                Noun::new(
                    format!("n{i}"),
                    LanguageCode::It,
                    Gender::Feminine,
                    "x",
                    (i * 7) % 100 < 37,
                )
            })
            .collect::<Vec<_>>();
        let expected = entries.iter().filter(|n| !n.animate).count();
        assert_eq!(expected, 63);
        let lex = Lexicon::new(LanguageCode::It, entries).unwrap();
        let filtered = filter_animate(&lex);
        assert_eq!(filtered.len(), 63);
        assert_eq!(filtered.counts().total, 63);
        assert_eq!(filter_animate(&filtered), filtered);
    }

    #[test]
    fn split_sizes() {
        assert_eq!(test_size(1414), 141);
        assert_eq!(test_size(10), 1);
        let lex = synthetic(1414, 9);
        let split = split_lexicon(&lex, 7).unwrap();
        assert_eq!(split.test.len(), 141);
        assert_eq!(split.train.len(), 1273);
        let small = synthetic(10, 9);
        let split = split_lexicon(&small, 1).unwrap();
        assert_eq!((split.test.len(), split.train.len()), (1, 9));
        assert!(split_lexicon(&synthetic(9, 9), 1).is_err());
    }

    #[test]
    fn split_is_deterministic_partition() {
        let lex = synthetic(57, 5);
        let a = split_lexicon(&lex, 42).unwrap();
        let b = split_lexicon(&lex, 42).unwrap();
        assert_eq!(a, b);
        let c = split_lexicon(&lex, 43).unwrap();
        assert_ne!(a.test, c.test);

        let mut all: Vec<&str> = a.train.iter().chain(&a.test).map(|n| n.surface.as_str()).collect();
        all.sort_unstable();
        let mut expected: Vec<&str> = lex.entries().iter().map(|n| n.surface.as_str()).collect();
        expected.sort_unstable();
        assert_eq!(all, expected);
    }

    #[test]
    fn language_codes_round_trip() {
        for code in LanguageCode::ALL {
            assert_eq!(code.as_str().parse::<LanguageCode>().unwrap(), code);
        }
        assert!("xx".parse::<LanguageCode>().is_err());
        assert_eq!(LanguageCode::SOURCES.len(), 10);
        assert!(LanguageCode::SOURCES.iter().all(|c| !c.is_pivot()));
    }
}
